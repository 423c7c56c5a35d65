use serde::{Deserialize, Serialize};

use crate::base::{augment, dot, RngStream};
use crate::error::{Error, Result};

use super::heap_index;

/// A complete binary decision tree of height `h`.
///
/// Internal node `(i, j)` lives at heap index `2^i + j - 1` in `nodes`; each
/// node is a `(p+1)`-vector over the augmented features and an input goes
/// left iff the affine value is strictly positive. Each leaf holds an
/// `m × (p+1)` matrix in row-major order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub height: usize,
    pub p: usize,
    pub m: usize,
    pub nodes: Vec<Vec<f64>>,
    pub leaves: Vec<Vec<f64>>,
}

impl DecisionTree {
    /// All-zero tree: every predicate sends inputs right, every leaf outputs 0.
    pub fn zeros(height: usize, p: usize, m: usize) -> Self {
        Self {
            height,
            p,
            m,
            nodes: vec![vec![0.0; p + 1]; (1 << height) - 1],
            leaves: vec![vec![0.0; m * (p + 1)]; 1 << height],
        }
    }

    pub fn random(height: usize, p: usize, m: usize, scale: f64, rng: &mut RngStream) -> Self {
        let mut t = Self::zeros(height, p, m);
        for v in t.nodes.iter_mut().chain(t.leaves.iter_mut()) {
            for c in v.iter_mut() {
                *c = rng.uniform_range(-scale, scale);
            }
        }
        t
    }

    pub fn num_internal(&self) -> usize {
        (1 << self.height) - 1
    }

    pub fn num_leaves(&self) -> usize {
        1 << self.height
    }

    pub fn node(&self, depth: usize, pos: usize) -> &[f64] {
        &self.nodes[heap_index(depth, pos)]
    }

    /// Row `output` of leaf `leaf`'s linear model.
    pub fn leaf_row(&self, leaf: usize, output: usize) -> &[f64] {
        let w = self.p + 1;
        &self.leaves[leaf][output * w..(output + 1) * w]
    }

    pub fn validate(&self) -> Result<()> {
        let w = self.p + 1;
        if self.nodes.len() != self.num_internal() || self.leaves.len() != self.num_leaves() {
            return Err(Error::InvalidArgument("tree is not complete".into()));
        }
        if self.nodes.iter().any(|n| n.len() != w)
            || self.leaves.iter().any(|l| l.len() != self.m * w)
        {
            return Err(Error::InvalidArgument(
                "tree parameter shape mismatch".into(),
            ));
        }
        if self
            .nodes
            .iter()
            .chain(&self.leaves)
            .any(|v| v.iter().any(|x| !x.is_finite()))
        {
            return Err(Error::InvalidArgument(
                "tree parameters must be finite".into(),
            ));
        }
        Ok(())
    }

    /// Index of the leaf reached by `x`.
    pub fn route(&self, x: &[f64]) -> usize {
        let xa = augment(x);
        self.route_augmented(&xa)
    }

    pub(crate) fn route_augmented(&self, xa: &[f64]) -> usize {
        let mut pos = 0;
        for depth in 0..self.height {
            let go_left = dot(&self.nodes[heap_index(depth, pos)], xa) > 0.0;
            pos = 2 * pos + usize::from(!go_left);
        }
        pos
    }

    /// Evaluates the tree: descend by predicates, apply the reached leaf model.
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let xa = augment(x);
        let leaf = self.route_augmented(&xa);
        (0..self.m)
            .map(|o| dot(self.leaf_row(leaf, o), &xa))
            .collect()
    }
}
