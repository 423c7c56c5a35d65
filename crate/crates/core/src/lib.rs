//! Synthesis of small, readable decision functions (constants, affine maps
//! and nested if-then-else trees) from black-box reward feedback.
//!
//! The learners only ever call [`learners::RewardOracle::query`]; everything
//! they know about the objective comes through those scalar rewards.

// `!(x > 0.0)` style checks are meant to reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod base;
pub mod bench;
pub mod dsl;
pub mod error;
pub mod learners;
pub mod session;
pub mod tree;

pub use error::{Error, Result};
