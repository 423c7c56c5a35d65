use serde::{Deserialize, Serialize};

/// Coupled annealing of the sigmoid sharpness `s` (grows) and the leaf
/// slack `eps` (shrinks), stepped every `period` rounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnnealSchedule {
    pub s0: f64,
    pub s_max: f64,
    pub s_growth: f64,
    pub eps0: f64,
    pub eps_min: f64,
    pub eps_decay: f64,
    pub period: u64,
}

impl Default for AnnealSchedule {
    fn default() -> Self {
        Self {
            s0: 1.0,
            s_max: 64.0,
            s_growth: 2.0,
            eps0: 0.5,
            eps_min: 1e-3,
            eps_decay: 0.5,
            period: 500,
        }
    }
}

impl AnnealSchedule {
    pub fn validate(&self) -> crate::Result<()> {
        let ok = self.s0 > 0.0
            && self.s0 <= self.s_max
            && self.s_growth > 1.0
            && self.eps_min > 0.0
            && self.eps_min <= self.eps0
            && self.eps0 <= 1.0
            && self.eps_decay > 0.0
            && self.eps_decay < 1.0
            && self.period >= 1;
        if ok {
            Ok(())
        } else {
            Err(crate::Error::InvalidArgument(format!(
                "invalid anneal schedule: {self:?}"
            )))
        }
    }

    /// `(s, eps)` for round `t`.
    pub fn at(&self, t: u64) -> (f64, f64) {
        let k = (t / self.period).min(i32::MAX as u64) as i32;
        let s = (self.s0 * self.s_growth.powi(k)).min(self.s_max);
        let eps = (self.eps0 * self.eps_decay.powi(k)).max(self.eps_min);
        (s, eps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn start_and_saturation() {
        let s = AnnealSchedule::default();
        assert_eq!(s.at(0), (s.s0, s.eps0));
        assert_eq!(s.at(u64::MAX), (s.s_max, s.eps_min));
    }

    #[test]
    fn default_at_thousand() {
        let (s, eps) = AnnealSchedule::default().at(1000);
        assert_eq!(s, 4.0);
        assert_eq!(eps, 0.125);
    }

    #[test]
    fn monotone() {
        let sched = AnnealSchedule::default();
        let mut prev = sched.at(0);
        for t in (0..20_000).step_by(37) {
            let cur = sched.at(t);
            assert!(cur.0 >= prev.0 && cur.1 <= prev.1);
            prev = cur;
        }
    }

    #[test]
    fn rejects_bad_schedule() {
        let s = AnnealSchedule {
            eps0: 1.5,
            ..Default::default()
        };
        assert!(s.validate().is_err());
        assert!(AnnealSchedule::default().validate().is_ok());
    }
}
