use crate::error::{Error, Result};
use crate::learners::RewardOracle;

/// Largest arm count the baseline accepts.
pub const MAX_ARMS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct UcbResult {
    /// Reward of every query, in order.
    pub curve: Vec<f64>,
    pub counts: Vec<u64>,
    pub means: Vec<f64>,
}

impl UcbResult {
    pub fn best_arm(&self) -> Option<usize> {
        (0..self.counts.len())
            .filter(|&i| self.counts[i] > 0)
            .max_by(|&a, &b| self.means[a].total_cmp(&self.means[b]))
    }
}

fn arm_count(grid: &[Vec<f64>]) -> Option<usize> {
    grid.iter()
        .try_fold(1usize, |acc, g| acc.checked_mul(g.len()))
}

/// Decision vector of arm `index` (mixed radix, last dimension fastest).
pub(crate) fn arm_decision(grid: &[Vec<f64>], mut index: usize) -> Vec<f64> {
    let mut out = vec![0.0; grid.len()];
    for (k, g) in grid.iter().enumerate().rev() {
        out[k] = g[index % g.len()];
        index /= g.len();
    }
    out
}

/// Non-contextual UCB1 over the product grid: each arm is played once, then
/// the arm maximizing `mean + sqrt(2 ln t / n)` is played.
pub fn ucb_baseline(
    oracle: &mut impl RewardOracle,
    grid: &[Vec<f64>],
    rounds: u64,
) -> Result<UcbResult> {
    if grid.is_empty() || grid.iter().any(Vec::is_empty) {
        return Err(Error::InvalidArgument(
            "every grid dimension needs at least one value".into(),
        ));
    }
    let arms = match arm_count(grid) {
        Some(n) if n <= MAX_ARMS => n,
        n => {
            let size = n.map_or_else(|| "overflow".to_string(), |n| n.to_string());
            return Err(Error::InvalidArgument(format!(
                "grid has {size} arms, limit is {MAX_ARMS}"
            )));
        }
    };
    let mut counts = vec![0u64; arms];
    let mut sums = vec![0.0; arms];
    let mut curve = Vec::with_capacity(rounds as usize);
    for t in 0..rounds {
        let arm = if (t as usize) < arms {
            t as usize
        } else {
            let log_t = ((t + 1) as f64).ln();
            let mut best = 0;
            let mut best_score = f64::NEG_INFINITY;
            for i in 0..arms {
                let n = counts[i] as f64;
                let score = sums[i] / n + (2.0 * log_t / n).sqrt();
                if score > best_score {
                    best_score = score;
                    best = i;
                }
            }
            best
        };
        oracle.observe();
        let r = oracle.query(&arm_decision(grid, arm))?;
        counts[arm] += 1;
        sums[arm] += r;
        curve.push(r);
    }
    let means = counts
        .iter()
        .zip(&sums)
        .map(|(&n, &s)| if n > 0 { s / n as f64 } else { 0.0 })
        .collect();
    Ok(UcbResult {
        curve,
        counts,
        means,
    })
}

/// `bins` evenly spaced values over `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    match bins {
        0 => Vec::new(),
        1 => vec![(lo + hi) / 2.0],
        _ => (0..bins)
            .map(|i| lo + (hi - lo) * i as f64 / (bins - 1) as f64)
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::FnOracle;

    #[test]
    fn single_arm_is_always_played() {
        let mut oracle = FnOracle::new(|a: &[f64]| -a[0].abs());
        let res = ucb_baseline(&mut oracle, &[vec![0.5]], 50).unwrap();
        assert_eq!(res.counts, vec![50]);
        assert_eq!(res.means, vec![-0.5]);
        assert_eq!(res.curve.len(), 50);
    }

    #[test]
    fn arm_counting_and_guard() {
        let grid = vec![linspace(-1.0, 1.0, 9); 3];
        assert_eq!(arm_count(&grid), Some(729));
        assert_eq!(arm_decision(&grid, 0), vec![-1.0; 3]);
        assert_eq!(arm_decision(&grid, 728), vec![1.0; 3]);
        let big = vec![linspace(-1.0, 1.0, 10); 7];
        let mut oracle = FnOracle::new(|_: &[f64]| 0.0);
        let err = ucb_baseline(&mut oracle, &big, 1).unwrap_err();
        assert!(err.to_string().contains("10000000"));
    }

    #[test]
    fn finds_best_arm() {
        let mut oracle = FnOracle::new(|a: &[f64]| -(a[0] - 0.5).powi(2));
        let res = ucb_baseline(&mut oracle, &[linspace(-1.0, 1.0, 9)], 2000).unwrap();
        assert_eq!(
            arm_decision(&[linspace(-1.0, 1.0, 9)], res.best_arm().unwrap()),
            vec![0.5]
        );
    }
}
