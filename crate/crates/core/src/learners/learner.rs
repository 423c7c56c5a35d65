use serde::{Deserialize, Serialize};

use crate::base::{
    augment, dot, project_ball_in_place, sample_unit_sphere, Hyperparams, RngStream,
};
use crate::error::{Error, Result};
use crate::tree::{infer_tree, AnnealSchedule, DecisionTree, EntropyNet};

use super::{Model, RewardOracle, RoundRecord};

/// Rewards are clipped to `[-REWARD_CLIP, REWARD_CLIP]` before any update.
pub const REWARD_CLIP: f64 = 1e6;

/// Largest tree height accepted anywhere in the library.
pub const MAX_TREE_HEIGHT: usize = 12;

/// Syntactic family of the decision function being learned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Template {
    Const,
    Linear,
    Tree { height: usize },
}

impl Template {
    /// Trainable parameter count: `m`, `m·(p+1)` or `(p+1)·(2^h−1 + m·2^h)`.
    pub fn num_params(&self, p: usize, m: usize) -> usize {
        match self {
            Template::Const => m,
            Template::Linear => m * (p + 1),
            Template::Tree { height } => (p + 1) * (((1 << height) - 1) + m * (1 << height)),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Template::Const => "const".into(),
            Template::Linear => "linear".into(),
            Template::Tree { height } => format!("tree{height}"),
        }
    }
}

/// Random initialization of tree parameters.
///
/// The predicate layer must not start at zero: with every `z1 = 0` no leaf
/// neuron is active and the gradient vanishes identically.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeInit {
    pub predicate_scale: f64,
    pub leaf_scale: f64,
}

impl Default for TreeInit {
    fn default() -> Self {
        Self {
            predicate_scale: 1.0,
            leaf_scale: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Params {
    Const { values: Vec<f64> },
    Linear { weights: Vec<f64> },
    Tree { net: EntropyNet },
}

/// Mutable state of one learner run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Learner {
    template: Template,
    p: usize,
    m: usize,
    params: Params,
    hp: Hyperparams,
    schedule: AnnealSchedule,
    round: u64,
    rng: RngStream,
}

impl Learner {
    /// Zero-initialized Const/Linear learner, or a randomly initialized tree
    /// learner with the default [`TreeInit`] and [`AnnealSchedule`].
    pub fn new(template: Template, p: usize, m: usize, hp: Hyperparams) -> Result<Self> {
        Self::build(
            template,
            p,
            m,
            hp,
            None,
            TreeInit::default(),
            AnnealSchedule::default(),
        )
    }

    pub fn with_init(
        template: Template,
        p: usize,
        m: usize,
        hp: Hyperparams,
        init: &[f64],
    ) -> Result<Self> {
        Self::build(
            template,
            p,
            m,
            hp,
            Some(init),
            TreeInit::default(),
            AnnealSchedule::default(),
        )
    }

    pub fn tree(
        height: usize,
        p: usize,
        m: usize,
        hp: Hyperparams,
        init: TreeInit,
        schedule: AnnealSchedule,
    ) -> Result<Self> {
        Self::build(Template::Tree { height }, p, m, hp, None, init, schedule)
    }

    /// General constructor: `init` is the flat parameter vector (random
    /// predicates per `tree_init` for trees when absent, zeros otherwise).
    pub fn build(
        template: Template,
        p: usize,
        m: usize,
        hp: Hyperparams,
        init: Option<&[f64]>,
        tree_init: TreeInit,
        schedule: AnnealSchedule,
    ) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidArgument("m must be >= 1".into()));
        }
        if !(hp.delta > 0.0) || !(hp.eta >= 0.0) || !(hp.radius > 0.0) {
            return Err(Error::InvalidArgument(
                "need delta > 0, eta >= 0 and radius > 0".into(),
            ));
        }
        schedule.validate()?;
        let rng = RngStream::new(hp.seed);
        let d = template.num_params(p, m);
        if let Some(init) = init {
            if init.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    actual: init.len(),
                });
            }
        }
        let params = match template {
            Template::Const => Params::Const {
                values: init.map_or(vec![0.0; m], <[f64]>::to_vec),
            },
            Template::Linear => Params::Linear {
                weights: init.map_or(vec![0.0; d], <[f64]>::to_vec),
            },
            Template::Tree { height } => {
                if height > MAX_TREE_HEIGHT {
                    return Err(Error::HeightCap {
                        height,
                        cap: MAX_TREE_HEIGHT,
                    });
                }
                let (_, eps) = schedule.at(0);
                let mut net = crate::tree::tree_to_net(&DecisionTree::zeros(height, p, m), eps);
                net.hard = false;
                match init {
                    Some(flat) => net.set_params(flat)?,
                    None => {
                        let mut init_rng = rng.fork(1);
                        for row in net.w1.iter_mut() {
                            for c in row.iter_mut() {
                                *c = init_rng.uniform_range(-1.0, 1.0) * tree_init.predicate_scale;
                            }
                        }
                        for row in net.w22.iter_mut() {
                            for c in row.iter_mut() {
                                *c = init_rng.uniform_range(-1.0, 1.0) * tree_init.leaf_scale;
                            }
                        }
                    }
                }
                Params::Tree { net }
            }
        };
        Ok(Self {
            template,
            p,
            m,
            params,
            hp,
            schedule,
            round: 0,
            rng,
        })
    }

    pub fn template(&self) -> Template {
        self.template
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn hyperparams(&self) -> &Hyperparams {
        &self.hp
    }

    pub fn schedule(&self) -> &AnnealSchedule {
        &self.schedule
    }

    /// The tree learner's network, if this is a tree learner.
    pub fn net(&self) -> Option<&EntropyNet> {
        match &self.params {
            Params::Tree { net } => Some(net),
            _ => None,
        }
    }

    /// Flat trainable parameters.
    pub fn params(&self) -> Vec<f64> {
        match &self.params {
            Params::Const { values } => values.clone(),
            Params::Linear { weights } => weights.clone(),
            Params::Tree { net } => net.params(),
        }
    }

    pub fn param_norm(&self) -> f64 {
        crate::base::norm(&self.params())
    }

    /// The learned model; trees are extracted positionally from the net.
    pub fn model(&self) -> Model {
        match &self.params {
            Params::Const { values } => Model::Const {
                values: values.clone(),
            },
            Params::Linear { weights } => Model::Linear {
                p: self.p,
                m: self.m,
                weights: weights.clone(),
            },
            Params::Tree { net } => Model::Tree {
                tree: infer_tree(net),
            },
        }
    }

    fn check_features(&self, x: &[f64]) -> Result<()> {
        if self.template != Template::Const && x.len() != self.p {
            return Err(Error::DimensionMismatch {
                expected: self.p,
                actual: x.len(),
            });
        }
        Ok(())
    }

    /// Unperturbed decision `a(t)` for features `x`; trees use the soft net
    /// at the current schedule point.
    pub fn decide(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_features(x)?;
        Ok(match &self.params {
            Params::Const { values } => values.clone(),
            Params::Linear { weights } => {
                let xa = augment(x);
                let w = self.p + 1;
                (0..self.m)
                    .map(|o| dot(&weights[o * w..(o + 1) * w], &xa))
                    .collect()
            }
            Params::Tree { net } => self.annealed(net).forward_soft(x).output,
        })
    }

    fn annealed(&self, net: &EntropyNet) -> EntropyNet {
        let mut net = net.clone();
        let (s, eps) = self.schedule.at(self.round);
        net.s = s;
        net.eps = eps;
        net.hard = false;
        net
    }

    pub(crate) fn rng_mut(&mut self) -> &mut RngStream {
        &mut self.rng
    }

    /// Draws the exploration direction: a random sign for scalar trees, a
    /// uniform unit vector otherwise.
    pub fn sample_perturbation(&mut self) -> Vec<f64> {
        match self.template {
            Template::Tree { .. } if self.m == 1 => vec![self.rng.sign()],
            _ => sample_unit_sphere(self.m, &mut self.rng).expect("m >= 1"),
        }
    }

    /// Applies one update given the exploration direction `u` and the reward
    /// signal: `r(a+δu)` in one-point mode, `r(a+δu) − r(a−δu)` in two-point
    /// mode.
    pub fn apply(&mut self, x: &[f64], u: &[f64], signal: f64) -> Result<()> {
        self.check_features(x)?;
        if u.len() != self.m {
            return Err(Error::DimensionMismatch {
                expected: self.m,
                actual: u.len(),
            });
        }
        let signal = signal.clamp(-2.0 * REWARD_CLIP, 2.0 * REWARD_CLIP);
        let Hyperparams {
            delta, eta, radius, ..
        } = self.hp;
        let m = self.m as f64;
        let (s, eps) = self.schedule.at(self.round);
        match &mut self.params {
            Params::Const { values } => {
                let f = eta / delta * signal;
                for (a, ui) in values.iter_mut().zip(u) {
                    *a += f * ui;
                }
                project_ball_in_place(values, radius);
            }
            Params::Linear { weights } => {
                let xa = augment(x);
                let w = self.p + 1;
                let f = eta * m / delta * signal;
                for (o, ui) in u.iter().enumerate() {
                    for (j, xj) in xa.iter().enumerate() {
                        weights[o * w + j] += f * ui * xj;
                    }
                }
                project_ball_in_place(weights, radius);
            }
            Params::Tree { net } => {
                net.s = s;
                net.eps = eps;
                net.hard = false;
                let pass = net.forward_soft(x);
                let scale = if self.m == 1 {
                    eta / delta
                } else {
                    eta * m / delta
                };
                let weights: Vec<f64> = u.iter().map(|ui| scale * signal * ui).collect();
                let grad = net.vjp(&pass, &weights);
                let mut flat = net.params();
                for (w, g) in flat.iter_mut().zip(&grad) {
                    *w += g;
                }
                project_ball_in_place(&mut flat, radius);
                net.set_params(&flat)?;
            }
        }
        self.round += 1;
        Ok(())
    }

    fn query_clipped(&self, oracle: &mut impl RewardOracle, point: &[f64]) -> Result<f64> {
        let r = oracle.query(point).map_err(|e| Error::Oracle {
            round: self.round,
            message: e.to_string(),
        })?;
        if !r.is_finite() {
            return Err(Error::Oracle {
                round: self.round,
                message: format!("non-finite reward {r}"),
            });
        }
        Ok(r.clamp(-REWARD_CLIP, REWARD_CLIP))
    }

    /// One full round: decide, perturb, query, update.
    pub fn step(&mut self, x: &[f64], oracle: &mut impl RewardOracle) -> Result<RoundRecord> {
        let decision = self.decide(x)?;
        let u = self.sample_perturbation();
        let delta = self.hp.delta;
        let plus: Vec<f64> = decision
            .iter()
            .zip(&u)
            .map(|(a, v)| a + delta * v)
            .collect();
        let round = self.round;
        let (queries, rewards, signal) = if self.hp.two_point {
            let minus: Vec<f64> = decision
                .iter()
                .zip(&u)
                .map(|(a, v)| a - delta * v)
                .collect();
            let rp = self.query_clipped(oracle, &plus)?;
            let rm = self.query_clipped(oracle, &minus)?;
            (vec![plus, minus], vec![rp, rm], rp - rm)
        } else {
            let r = self.query_clipped(oracle, &plus)?;
            (vec![plus], vec![r], r)
        };
        self.apply(x, &u, signal)?;
        Ok(RoundRecord {
            round,
            features: x.to_vec(),
            decision,
            perturbation: u,
            queries,
            rewards,
        })
    }

    /// Algorithm for constants: context is ignored.
    pub fn update_constant(&mut self, oracle: &mut impl RewardOracle) -> Result<RoundRecord> {
        self.expect(Template::Const)?;
        self.step(&[], oracle)
    }

    pub fn update_linear(
        &mut self,
        x: &[f64],
        oracle: &mut impl RewardOracle,
    ) -> Result<RoundRecord> {
        self.expect(Template::Linear)?;
        self.step(x, oracle)
    }

    pub fn update_tree(
        &mut self,
        x: &[f64],
        oracle: &mut impl RewardOracle,
    ) -> Result<RoundRecord> {
        if !matches!(self.template, Template::Tree { .. }) {
            return Err(Error::InvalidArgument(
                "learner is not a tree learner".into(),
            ));
        }
        self.step(x, oracle)
    }

    fn expect(&self, t: Template) -> Result<()> {
        if self.template != t {
            return Err(Error::InvalidArgument(format!(
                "learner template is {}, not {}",
                self.template.name(),
                t.name()
            )));
        }
        Ok(())
    }
}
