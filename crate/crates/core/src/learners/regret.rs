use serde::{Deserialize, Serialize};

use crate::base::Hyperparams;
use crate::error::{Error, Result};

/// What happened in one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: u64,
    pub features: Vec<f64>,
    pub decision: Vec<f64>,
    pub perturbation: Vec<f64>,
    /// Points at which the oracle was queried (one or two).
    pub queries: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
}

impl RoundRecord {
    /// Reward attributed to this round's play.
    ///
    /// One-point rounds only observe the perturbed point, which is what was
    /// actually played. Two-point rounds never query the decision itself; the
    /// mean of the symmetric pair stands in for it.
    pub fn played_reward(&self) -> f64 {
        self.rewards.iter().sum::<f64>() / self.rewards.len() as f64
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RoundTrace {
    pub records: Vec<RoundRecord>,
    pub query_count: u64,
}

impl RoundTrace {
    pub fn push(&mut self, rec: RoundRecord) {
        self.query_count += rec.queries.len() as u64;
        self.records.push(rec);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn played_rewards(&self) -> Vec<f64> {
        self.records
            .iter()
            .map(RoundRecord::played_reward)
            .collect()
    }
}

/// Average regret `R_T = best − (1/T)·Σ_{t≤T} r(t)` for every prefix `T`.
pub fn regret_trace(trace: &RoundTrace, best_value: f64) -> Vec<f64> {
    let mut sum = 0.0;
    trace
        .records
        .iter()
        .enumerate()
        .map(|(i, rec)| {
            sum += rec.played_reward();
            best_value - sum / (i + 1) as f64
        })
        .collect()
}

/// Problem-scale estimates for the linear learner's tuning rule: parameter
/// ball scale `w`, feature norm bound `d`, reward bound `c`, Lipschitz
/// constant `l`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleEstimates {
    pub w: f64,
    pub d: f64,
    pub c: f64,
    pub l: f64,
}

/// `δ = m·(W·D·C / (2L·√T))^{1/2}` and `η = W·δ / (D·C·√T)`; without
/// estimates, the practical defaults `δ = 0.5`, `η = 2e-3`.
pub fn regret_tuned_hyperparams(
    m: usize,
    estimates: Option<ScaleEstimates>,
    rounds: u64,
) -> Result<Hyperparams> {
    let mut hp = Hyperparams::defaults(m);
    hp.max_rounds = rounds;
    let Some(ScaleEstimates { w, d, c, l }) = estimates else {
        return Ok(hp);
    };
    if [w, d, c, l].iter().any(|v| !(*v > 0.0)) || rounds == 0 {
        return Err(Error::InvalidArgument(
            "estimates and T must be positive".into(),
        ));
    }
    let sqrt_t = (rounds as f64).sqrt();
    hp.delta = m as f64 * (w * d * c / (2.0 * l * sqrt_t)).sqrt();
    hp.eta = w * hp.delta / (d * c * sqrt_t);
    hp.radius = m as f64 * w;
    Ok(hp)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(r: f64) -> RoundRecord {
        RoundRecord {
            round: 0,
            features: vec![],
            decision: vec![0.0],
            perturbation: vec![1.0],
            queries: vec![vec![0.0]],
            rewards: vec![r],
        }
    }

    #[test]
    fn regret_of_optimal_play_is_zero() {
        let mut t = RoundTrace::default();
        for _ in 0..10 {
            t.push(rec(3.0));
        }
        assert!(regret_trace(&t, 3.0).iter().all(|r| *r == 0.0));
        assert_eq!(t.query_count, 10);
    }

    #[test]
    fn single_round_regret() {
        let mut t = RoundTrace::default();
        t.push(rec(1.0));
        assert_eq!(regret_trace(&t, 2.0), vec![1.0]);
    }

    #[test]
    fn tuned_step_sizes() {
        let est = ScaleEstimates {
            w: 1.0,
            d: 1.0,
            c: 1.0,
            l: 1.0,
        };
        let hp = regret_tuned_hyperparams(1, Some(est), 10_000).unwrap();
        let delta = (1.0f64 / 200.0).sqrt();
        assert!((hp.delta - delta).abs() < 1e-15);
        assert!((hp.delta - 0.0707).abs() < 1e-4);
        assert!((hp.eta - delta / 100.0).abs() < 1e-15);
        let hp2 = regret_tuned_hyperparams(2, Some(est), 10_000).unwrap();
        assert!((hp2.delta - 2.0 * hp.delta).abs() < 1e-15);
    }

    #[test]
    fn tuning_fallback_and_errors() {
        let hp = regret_tuned_hyperparams(1, None, 100).unwrap();
        assert_eq!((hp.delta, hp.eta), (0.5, 2e-3));
        let bad = ScaleEstimates {
            w: 0.0,
            d: 1.0,
            c: 1.0,
            l: 1.0,
        };
        assert!(regret_tuned_hyperparams(1, Some(bad), 100).is_err());
    }
}
