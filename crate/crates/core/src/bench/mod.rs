//! Reward oracles for the built-in problems, the discretized UCB1 baseline
//! and the suite runner that writes results as CSV.

mod flatten;
mod problems;
mod suite;
mod ucb;

pub use flatten::FlattenedOracle;
pub use problems::{
    inversek2j, monomials, LinearLossProblem, Loss, ParrotProblem, SlatesProblem,
    ThermostatProblem, XorProblem,
};
pub use suite::{
    run_benchmark, run_cell, BenchResult, CellSpec, HpSpec, Method, Problem, ProblemKind,
    SuiteSpec, CSV_HEADER,
};
pub use ucb::{linspace, ucb_baseline, UcbResult, MAX_ARMS};
