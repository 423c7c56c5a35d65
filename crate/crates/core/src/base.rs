//! Numeric primitives shared by every learner: feature augmentation, seeded
//! random streams, sphere sampling, ball projection and output constraints.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Appends the constant feature `1.0`, so affine maps become linear ones.
pub fn augment(x: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len() + 1);
    out.extend_from_slice(x);
    out.push(1.0);
    out
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// A seeded, single-owner random stream.
///
/// The full generator state is `(seed, word_pos)`, which is what gets
/// persisted so that a reloaded stream continues bit-for-bit.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Derives an independent child stream; the parent is not advanced.
    pub fn fork(&self, tag: u64) -> Self {
        Self::new(splitmix64(
            self.seed ^ splitmix64(tag.wrapping_add(0x9e37_79b9)),
        ))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn state(&self) -> RngState {
        RngState {
            seed: self.seed,
            word_pos: self.rng.get_word_pos(),
        }
    }

    pub fn from_state(state: RngState) -> Self {
        let mut s = Self::new(state.seed);
        s.rng.set_word_pos(state.word_pos);
        s
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `lo..=hi`.
    pub fn int_range(&mut self, lo: i64, hi: i64) -> i64 {
        self.rng.random_range(lo..=hi)
    }

    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn sign(&mut self) -> f64 {
        if self.rng.random::<bool>() {
            1.0
        } else {
            -1.0
        }
    }
}

impl PartialEq for RngStream {
    fn eq(&self, other: &Self) -> bool {
        self.state() == other.state()
    }
}

/// Serializable position of an [`RngStream`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub word_pos: u128,
}

impl Serialize for RngStream {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.state().serialize(s)
    }
}

impl<'de> Deserialize<'de> for RngStream {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        RngState::deserialize(d).map(RngStream::from_state)
    }
}

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Uniform sample from the unit sphere in `dim` dimensions (normalized
/// Gaussian vector).
pub fn sample_unit_sphere(dim: usize, rng: &mut RngStream) -> Result<Vec<f64>> {
    if dim == 0 {
        return Err(Error::InvalidArgument(
            "sphere dimension must be >= 1".into(),
        ));
    }
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
        let n = norm(&v);
        // Measure-zero event, but a zero vector cannot be normalized.
        if n > 1e-300 {
            return Ok(v.into_iter().map(|x| x / n).collect());
        }
    }
}

/// Euclidean projection onto the ball `{w : ‖w‖₂ ≤ radius}`.
pub fn project_ball(w: &[f64], radius: f64) -> Vec<f64> {
    let mut out = w.to_vec();
    project_ball_in_place(&mut out, radius);
    out
}

pub fn project_ball_in_place(w: &mut [f64], radius: f64) {
    let n = norm(w);
    if n > radius {
        let scale = radius / n;
        w.iter_mut().for_each(|x| *x *= scale);
    }
}

/// Range and integrality constraints on one decision output.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Constraints {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
    #[serde(default)]
    pub is_int: bool,
}

impl Constraints {
    pub fn validate(&self) -> Result<()> {
        if let (Some(lo), Some(hi)) = (self.min, self.max) {
            if lo > hi {
                return Err(Error::InvalidArgument(format!(
                    "constraint min {lo} exceeds max {hi}"
                )));
            }
        }
        Ok(())
    }
}

/// Clamps into `[min, max]`, then rounds half away from zero if integral.
pub fn apply_constraints(v: f64, c: &Constraints) -> f64 {
    let mut v = v;
    if let Some(lo) = c.min {
        v = v.max(lo);
    }
    if let Some(hi) = c.max {
        v = v.min(hi);
    }
    if c.is_int {
        // f64::round rounds half away from zero.
        v = v.round();
    }
    v
}

/// Learner hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Perturbation radius.
    pub delta: f64,
    /// Learning rate.
    pub eta: f64,
    /// Radius of the projection ball for the parameter vector.
    pub radius: f64,
    pub two_point: bool,
    pub max_rounds: u64,
    pub seed: u64,
}

impl Hyperparams {
    pub const DEFAULT_DELTA: f64 = 0.5;
    pub const DEFAULT_ETA: f64 = 2e-3;

    /// The practical defaults (`δ = 0.5`, `η = 2e-3`, radius `100·m`).
    pub fn defaults(m: usize) -> Self {
        Self {
            delta: Self::DEFAULT_DELTA,
            eta: Self::DEFAULT_ETA,
            radius: 100.0 * m.max(1) as f64,
            two_point: false,
            max_rounds: 10_000,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(what.to_string()));
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return bad("delta must be > 0");
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return bad("eta must be > 0");
        }
        if !(self.radius > 0.0) {
            return bad("radius must be > 0");
        }
        if self.max_rounds == 0 {
            return bad("max_rounds must be >= 1");
        }
        Ok(())
    }
}
