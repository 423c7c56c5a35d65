use crate::error::Result;
use crate::learners::{Model, RewardOracle, Template};

/// Presents a structured template's parameters as plain constants: each
/// query builds the model from the flat parameter vector, evaluates it on the
/// current context and forwards the decision to the inner oracle.
///
/// Running the constants learner on this oracle is the structure-blind
/// baseline that treats every parameter as an independent hole.
#[derive(Debug, Clone)]
pub struct FlattenedOracle<O> {
    inner: O,
    template: Template,
    p: usize,
    m: usize,
    current: Vec<f64>,
}

impl<O: RewardOracle> FlattenedOracle<O> {
    pub fn new(inner: O, template: Template, p: usize, m: usize) -> Self {
        Self {
            inner,
            template,
            p,
            m,
            current: vec![0.0; p],
        }
    }

    pub fn num_params(&self) -> usize {
        self.template.num_params(self.p, self.m)
    }

    pub fn inner(&self) -> &O {
        &self.inner
    }

    pub fn model(&self, flat: &[f64]) -> Result<Model> {
        Model::from_flat(&self.template, self.p, self.m, flat)
    }
}

impl<O: RewardOracle> RewardOracle for FlattenedOracle<O> {
    fn observe(&mut self) -> Vec<f64> {
        self.current = self.inner.observe();
        self.current.clone()
    }

    fn query(&mut self, flat: &[f64]) -> Result<f64> {
        let decision = self.model(flat)?.eval(&self.current);
        self.inner.query(&decision)
    }

    fn query_count(&self) -> u64 {
        self.inner.query_count()
    }

    fn best_value(&self) -> Option<f64> {
        self.inner.best_value()
    }
}
