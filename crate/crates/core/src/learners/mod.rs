//! Zeroth-order learners for the three templates, the online driver and
//! regret accounting.
//!
//! Every learner follows the same propose/apply split: [`Learner::decide`]
//! computes the unperturbed decision, [`Learner::sample_perturbation`] draws
//! the exploration direction, and [`Learner::apply`] consumes the reward
//! observed at the perturbed point. The online driver and the session replay
//! both go through this split, which is what makes them bit-identical.

mod driver;
mod estimator;
mod learner;
mod model;
mod oracle;
mod regret;

pub use driver::{
    learn_in_rounds, learn_in_rounds_with, Aborted, Control, Outcome, StopReason, StopRule,
};
pub use estimator::{one_point_estimate, two_point_estimate};
pub use learner::{Learner, Template, TreeInit, MAX_TREE_HEIGHT, REWARD_CLIP};
pub use model::Model;
pub use oracle::{FnOracle, RewardOracle};
pub use regret::{regret_trace, regret_tuned_hyperparams, RoundRecord, RoundTrace, ScaleEstimates};
