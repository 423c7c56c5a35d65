use serde::{Deserialize, Serialize};

use crate::base::{augment, dot};
use crate::error::{Error, Result};
use crate::tree::DecisionTree;

use super::Template;

/// A learned decision function in one of the three template families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Model {
    Const {
        values: Vec<f64>,
    },
    /// `m × (p+1)` row-major weights over augmented features.
    Linear {
        p: usize,
        m: usize,
        weights: Vec<f64>,
    },
    Tree {
        tree: DecisionTree,
    },
}

impl Model {
    pub fn zeros(template: &Template, p: usize, m: usize) -> Self {
        match template {
            Template::Const => Model::Const {
                values: vec![0.0; m],
            },
            Template::Linear => Model::Linear {
                p,
                m,
                weights: vec![0.0; m * (p + 1)],
            },
            Template::Tree { height } => Model::Tree {
                tree: DecisionTree::zeros(*height, p, m),
            },
        }
    }

    /// Rebuilds a model from a flat parameter vector laid out as
    /// [`Model::flat`] produces it.
    pub fn from_flat(template: &Template, p: usize, m: usize, flat: &[f64]) -> Result<Self> {
        let expected = template.num_params(p, m);
        if flat.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                actual: flat.len(),
            });
        }
        Ok(match template {
            Template::Const => Model::Const {
                values: flat.to_vec(),
            },
            Template::Linear => Model::Linear {
                p,
                m,
                weights: flat.to_vec(),
            },
            Template::Tree { height } => {
                let mut tree = DecisionTree::zeros(*height, p, m);
                let mut it = flat.iter().copied();
                for v in tree.nodes.iter_mut().chain(tree.leaves.iter_mut()) {
                    for c in v.iter_mut() {
                        *c = it.next().expect("length checked");
                    }
                }
                Model::Tree { tree }
            }
        })
    }

    pub fn flat(&self) -> Vec<f64> {
        match self {
            Model::Const { values } => values.clone(),
            Model::Linear { weights, .. } => weights.clone(),
            Model::Tree { tree } => tree
                .nodes
                .iter()
                .chain(&tree.leaves)
                .flatten()
                .copied()
                .collect(),
        }
    }

    pub fn m(&self) -> usize {
        match self {
            Model::Const { values } => values.len(),
            Model::Linear { m, .. } => *m,
            Model::Tree { tree } => tree.m,
        }
    }

    /// Evaluates the (hard) decision function.
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Model::Const { values } => values.clone(),
            Model::Linear { p, m, weights } => {
                let xa = augment(x);
                debug_assert_eq!(xa.len(), p + 1);
                (0..*m)
                    .map(|o| dot(&weights[o * (p + 1)..(o + 1) * (p + 1)], &xa))
                    .collect()
            }
            Model::Tree { tree } => tree.eval(x),
        }
    }
}
