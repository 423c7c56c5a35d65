use crate::error::Result;

/// Black-box reward access.
///
/// Learners call [`query`](Self::query) and nothing else. Contextual problems
/// additionally expose their feature stream through
/// [`observe`](Self::observe), which only the round driver calls.
pub trait RewardOracle {
    /// Advances to the next round's context and returns its features.
    /// Context-free oracles return an empty vector.
    fn observe(&mut self) -> Vec<f64> {
        Vec::new()
    }

    /// Reward for executing with decision vector `decision` in the current
    /// context.
    fn query(&mut self, decision: &[f64]) -> Result<f64>;

    fn query_count(&self) -> u64;

    /// Analytic optimum of the expected reward, when known.
    fn best_value(&self) -> Option<f64> {
        None
    }
}

impl<T: RewardOracle + ?Sized> RewardOracle for &mut T {
    fn observe(&mut self) -> Vec<f64> {
        (**self).observe()
    }
    fn query(&mut self, decision: &[f64]) -> Result<f64> {
        (**self).query(decision)
    }
    fn query_count(&self) -> u64 {
        (**self).query_count()
    }
    fn best_value(&self) -> Option<f64> {
        (**self).best_value()
    }
}

/// Context-free oracle backed by a closure.
pub struct FnOracle<F> {
    f: F,
    count: u64,
    best: Option<f64>,
}

impl<F: FnMut(&[f64]) -> f64> FnOracle<F> {
    pub fn new(f: F) -> Self {
        Self {
            f,
            count: 0,
            best: None,
        }
    }

    pub fn with_best(f: F, best: f64) -> Self {
        Self {
            f,
            count: 0,
            best: Some(best),
        }
    }
}

impl<F: FnMut(&[f64]) -> f64> RewardOracle for FnOracle<F> {
    fn query(&mut self, decision: &[f64]) -> Result<f64> {
        self.count += 1;
        Ok((self.f)(decision))
    }

    fn query_count(&self) -> u64 {
        self.count
    }

    fn best_value(&self) -> Option<f64> {
        self.best
    }
}
