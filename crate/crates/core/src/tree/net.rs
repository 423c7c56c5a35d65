use serde::{Deserialize, Serialize};

use crate::base::{augment, dot};
use crate::error::{Error, Result};

use super::{heap_index, DecisionTree};

/// Three-layer network that encodes a [`DecisionTree`].
///
/// * predicate layer: one neuron per internal node, `z1 = sign(w1·x̃)` in hard
///   mode and `2σ(s·w1·x̃) − 1` in soft mode;
/// * leaf layer: a path neuron `z21_k = max(Σ g·z1 − h + ε, 0)` and a linear
///   neuron `z22_k = θ_k·x̃` per leaf;
/// * output: `(1/ε)·Σ_k z21_k·z22_k`.
///
/// The path weights (`w21`) are fixed `±1` entries on each leaf's root path
/// and are stored sparsely; only `w1` and `w22` are trainable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyNet {
    pub height: usize,
    pub p: usize,
    pub m: usize,
    /// Predicate rows in heap order, each `p+1` long (bias last).
    pub w1: Vec<Vec<f64>>,
    /// Leaf models, each `m × (p+1)` row-major (bias last in each row).
    pub w22: Vec<Vec<f64>>,
    paths: Vec<Vec<(usize, i8)>>,
    pub eps: f64,
    pub s: f64,
    pub hard: bool,
}

/// Activations cached by a soft forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct SoftPass {
    pub xa: Vec<f64>,
    pub z1: Vec<f64>,
    /// `dz1/d(pre-activation)`.
    pub dz1: Vec<f64>,
    /// Leaf path pre-activations `Σ g·z1 − h + ε`.
    pub q: Vec<f64>,
    pub z21: Vec<f64>,
    /// Leaf linear outputs, `m` per leaf.
    pub z22: Vec<Vec<f64>>,
    pub output: Vec<f64>,
    pub eps: f64,
}

fn leaf_paths(height: usize) -> Vec<Vec<(usize, i8)>> {
    (0..1usize << height)
        .map(|leaf| {
            (0..height)
                .map(|depth| {
                    // ancestor of `leaf` at `depth`, and the direction taken from it
                    let pos = leaf >> (height - depth);
                    let went_right = (leaf >> (height - depth - 1)) & 1 == 1;
                    (heap_index(depth, pos), if went_right { -1 } else { 1 })
                })
                .collect()
        })
        .collect()
}

fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

impl EntropyNet {
    /// Net for an all-zero tree.
    pub fn zeros(height: usize, p: usize, m: usize, eps: f64) -> Self {
        tree_to_net(&DecisionTree::zeros(height, p, m), eps)
    }

    pub fn num_internal(&self) -> usize {
        (1 << self.height) - 1
    }

    pub fn num_leaves(&self) -> usize {
        1 << self.height
    }

    /// Number of trainable parameters: `(p+1)·(2^h − 1) + 2^h·m·(p+1)`.
    pub fn num_params(&self) -> usize {
        (self.p + 1) * (self.num_internal() + self.num_leaves() * self.m)
    }

    /// Dense view of the fixed path-weight matrix (`2^h × (2^h − 1)`).
    pub fn w21_dense(&self) -> Vec<Vec<i8>> {
        self.paths
            .iter()
            .map(|path| {
                let mut row = vec![0i8; self.num_internal()];
                for &(n, g) in path {
                    row[n] = g;
                }
                row
            })
            .collect()
    }

    pub fn w21_checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for row in self.w21_dense() {
            for v in row {
                h ^= v as u8 as u64;
                h = h.wrapping_mul(0x100_0000_01b3);
            }
        }
        h
    }

    /// Flattened trainable parameters: predicate rows, then leaf models.
    pub fn params(&self) -> Vec<f64> {
        self.w1.iter().chain(&self.w22).flatten().copied().collect()
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::DimensionMismatch {
                expected: self.num_params(),
                actual: flat.len(),
            });
        }
        let mut it = flat.iter().copied();
        for v in self.w1.iter_mut().chain(self.w22.iter_mut()) {
            for c in v.iter_mut() {
                *c = it.next().expect("length checked");
            }
        }
        Ok(())
    }

    fn leaf_outputs(&self, xa: &[f64]) -> Vec<Vec<f64>> {
        let w = self.p + 1;
        self.w22
            .iter()
            .map(|theta| {
                (0..self.m)
                    .map(|o| dot(&theta[o * w..(o + 1) * w], xa))
                    .collect()
            })
            .collect()
    }

    fn combine(&self, z21: &[f64], z22: &[Vec<f64>], eps: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.m];
        for (a, zk) in z21.iter().zip(z22) {
            if *a != 0.0 {
                for (o, v) in out.iter_mut().zip(zk) {
                    *o += a / eps * v;
                }
            }
        }
        out
    }

    fn path_preactivations(&self, z1: &[f64], eps: f64) -> Vec<f64> {
        let h = self.height as f64;
        self.paths
            .iter()
            .map(|path| path.iter().map(|&(n, g)| g as f64 * z1[n]).sum::<f64>() - h + eps)
            .collect()
    }

    /// Sign-activated forward pass; `sign(0) = −1` so ties go right.
    pub fn forward_hard(&self, x: &[f64]) -> Vec<f64> {
        let xa = augment(x);
        let z1: Vec<f64> = self
            .w1
            .iter()
            .map(|w| if dot(w, &xa) > 0.0 { 1.0 } else { -1.0 })
            .collect();
        let z21: Vec<f64> = self
            .path_preactivations(&z1, self.eps)
            .into_iter()
            .map(|q| q.max(0.0))
            .collect();
        let z22 = self.leaf_outputs(&xa);
        self.combine(&z21, &z22, self.eps)
    }

    /// Hard leaf-layer activations, exposed for path-uniqueness checks.
    pub fn hard_leaf_activations(&self, x: &[f64]) -> Vec<f64> {
        let xa = augment(x);
        let z1: Vec<f64> = self
            .w1
            .iter()
            .map(|w| if dot(w, &xa) > 0.0 { 1.0 } else { -1.0 })
            .collect();
        self.path_preactivations(&z1, self.eps)
            .into_iter()
            .map(|q| q.max(0.0))
            .collect()
    }

    /// Sigmoid-relaxed forward pass at the net's current `s` and `eps`.
    pub fn forward_soft(&self, x: &[f64]) -> SoftPass {
        let xa = augment(x);
        let mut z1 = Vec::with_capacity(self.w1.len());
        let mut dz1 = Vec::with_capacity(self.w1.len());
        for w in &self.w1 {
            let sig = sigmoid(self.s * dot(w, &xa));
            z1.push(2.0 * sig - 1.0);
            dz1.push(2.0 * self.s * sig * (1.0 - sig));
        }
        let q = self.path_preactivations(&z1, self.eps);
        let z21: Vec<f64> = q.iter().map(|v| v.max(0.0)).collect();
        let z22 = self.leaf_outputs(&xa);
        let output = self.combine(&z21, &z22, self.eps);
        SoftPass {
            xa,
            z1,
            dz1,
            q,
            z21,
            z22,
            output,
            eps: self.eps,
        }
    }

    /// Forward pass in the mode selected by `hard`.
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        if self.hard {
            self.forward_hard(x)
        } else {
            self.forward_soft(x).output
        }
    }

    /// Vector–Jacobian product `Σ_o weights[o]·∇ output_o` with respect to the
    /// flattened trainable parameters (same layout as [`Self::params`]).
    pub fn vjp(&self, pass: &SoftPass, weights: &[f64]) -> Vec<f64> {
        debug_assert_eq!(weights.len(), self.m);
        let w = self.p + 1;
        let n_internal = self.num_internal();
        let mut grad = vec![0.0; self.num_params()];
        // d out / d z1_n, accumulated over active leaves
        let mut dz = vec![0.0; n_internal];
        for (k, path) in self.paths.iter().enumerate() {
            // ReLU subgradient is 0 at q ≤ 0
            if pass.q[k] <= 0.0 {
                continue;
            }
            let leaf_weight: f64 = pass.z22[k]
                .iter()
                .zip(weights)
                .map(|(z, c)| z * c)
                .sum::<f64>()
                / pass.eps;
            for &(n, g) in path {
                dz[n] += leaf_weight * g as f64;
            }
            let scale = pass.z21[k] / pass.eps;
            let base = n_internal * w + k * self.m * w;
            for (o, c) in weights.iter().enumerate() {
                let f = scale * c;
                if f != 0.0 {
                    for (j, xj) in pass.xa.iter().enumerate() {
                        grad[base + o * w + j] = f * xj;
                    }
                }
            }
        }
        for n in 0..n_internal {
            let f = dz[n] * pass.dz1[n];
            if f != 0.0 {
                for (j, xj) in pass.xa.iter().enumerate() {
                    grad[n * w + j] = f * xj;
                }
            }
        }
        grad
    }

    /// Full Jacobian: one gradient row per output coordinate.
    pub fn gradient(&self, pass: &SoftPass) -> Vec<Vec<f64>> {
        (0..self.m)
            .map(|o| {
                let mut e = vec![0.0; self.m];
                e[o] = 1.0;
                self.vjp(pass, &e)
            })
            .collect()
    }
}

/// Encodes `tree` as a hard-mode net with slack `eps` (must lie in `(0, 1]`).
pub fn tree_to_net(tree: &DecisionTree, eps: f64) -> EntropyNet {
    assert!(eps > 0.0 && eps <= 1.0, "eps must lie in (0, 1]");
    EntropyNet {
        height: tree.height,
        p: tree.p,
        m: tree.m,
        w1: tree.nodes.clone(),
        w22: tree.leaves.clone(),
        paths: leaf_paths(tree.height),
        eps,
        s: 1.0,
        hard: true,
    }
}

/// Positional extraction of the tree encoded by `net`.
pub fn infer_tree(net: &EntropyNet) -> DecisionTree {
    DecisionTree {
        height: net.height,
        p: net.p,
        m: net.m,
        nodes: net.w1.clone(),
        leaves: net.w22.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::base::RngStream;

    #[test]
    fn h1_path_weights() {
        let net = EntropyNet::zeros(1, 2, 1, 0.5);
        assert_eq!(net.w21_dense(), vec![vec![1], vec![-1]]);
    }

    #[test]
    fn h2_path_weights() {
        let net = EntropyNet::zeros(2, 1, 1, 0.5);
        // nodes: 0 root, 1 left child, 2 right child
        assert_eq!(
            net.w21_dense(),
            vec![
                vec![1, 1, 0],
                vec![1, -1, 0],
                vec![-1, 0, 1],
                vec![-1, 0, -1]
            ]
        );
        for row in net.w21_dense() {
            assert_eq!(row.iter().filter(|v| **v != 0).count(), 2);
        }
    }

    #[test]
    fn matching_leaf_preactivation_equals_eps() {
        // every sign pattern for h = 2: the reached leaf has w21·z1 = h
        let net = EntropyNet::zeros(2, 1, 1, 0.3);
        for bits in 0..8u32 {
            let z1: Vec<f64> = (0..3)
                .map(|i| if bits >> i & 1 == 1 { 1.0 } else { -1.0 })
                .collect();
            let q = net.path_preactivations(&z1, 0.3);
            let active: Vec<usize> = (0..4).filter(|k| q[*k] > 0.0).collect();
            assert_eq!(active.len(), 1);
            assert!((q[active[0]] - 0.3).abs() < 1e-15);
            // route by hand
            let left = z1[0] > 0.0;
            let child = if left { 1 } else { 2 };
            let leaf = if left { 0 } else { 2 } + usize::from(z1[child] < 0.0);
            assert_eq!(active[0], leaf);
        }
    }

    #[test]
    fn round_trip_is_bitwise() {
        let mut rng = RngStream::new(1);
        let t = DecisionTree::random(3, 4, 2, 2.0, &mut rng);
        assert_eq!(infer_tree(&tree_to_net(&t, 0.25)), t);
    }

    #[test]
    fn height_zero_net() {
        let mut t = DecisionTree::zeros(0, 2, 1);
        t.leaves[0] = vec![1.0, -1.0, 3.0];
        let net = tree_to_net(&t, 1.0);
        assert_eq!(infer_tree(&net).leaves[0], net.w22[0]);
        assert!((net.forward_hard(&[2.0, 1.0])[0] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn soft_zero_predicate_is_zero() {
        let mut net = EntropyNet::zeros(1, 1, 1, 1.0);
        net.hard = false;
        let pass = net.forward_soft(&[0.7]);
        assert_eq!(pass.z1, vec![0.0]);
        // both leaves: max(±0 − 1 + 1, 0) = 0
        assert_eq!(pass.z21, vec![0.0, 0.0]);
        assert_eq!(pass.output, vec![0.0]);
    }

    #[test]
    fn soft_converges_to_hard() {
        let mut rng = RngStream::new(7);
        let t = DecisionTree::random(3, 2, 1, 1.0, &mut rng);
        let mut net = tree_to_net(&t, 0.5);
        net.hard = false;
        net.s = 1e6;
        let mut checked = 0;
        while checked < 200 {
            let x = [rng.uniform_range(-2.0, 2.0), rng.uniform_range(-2.0, 2.0)];
            let xa = augment(&x);
            if net.w1.iter().any(|w| dot(w, &xa).abs() < 0.01) {
                continue;
            }
            let soft = net.forward_soft(&x).output[0];
            let hard = net.forward_hard(&x)[0];
            assert!((soft - hard).abs() <= 1e-6, "{soft} vs {hard}");
            checked += 1;
        }
    }

    #[test]
    fn leaf_bias_gradient_is_z21_over_eps() {
        let mut rng = RngStream::new(11);
        let t = DecisionTree::random(2, 3, 1, 1.0, &mut rng);
        let mut net = tree_to_net(&t, 0.8);
        net.hard = false;
        net.s = 3.0;
        let x = [0.3, -0.2, 0.9];
        let pass = net.forward_soft(&x);
        let g = &net.gradient(&pass)[0];
        let w = net.p + 1;
        for k in 0..net.num_leaves() {
            let bias_idx = net.num_internal() * w + k * w + net.p;
            assert!((g[bias_idx] - pass.z21[k] / pass.eps).abs() < 1e-12);
        }
    }

    #[test]
    fn params_round_trip() {
        let mut rng = RngStream::new(5);
        let t = DecisionTree::random(2, 2, 2, 1.0, &mut rng);
        let mut net = tree_to_net(&t, 0.5);
        let flat = net.params();
        assert_eq!(flat.len(), net.num_params());
        assert_eq!(flat.len(), 3 * (3 + 4 * 2));
        net.set_params(&flat).unwrap();
        assert_eq!(infer_tree(&net), t);
        assert!(net.set_params(&flat[1..]).is_err());
    }
}
