//! Persistent problem instances behind a predict / assign-reward / refresh
//! API, plus a line-oriented request loop over it.
//!
//! Every `predict` hands out the perturbed decision `a + δu` and logs the
//! perturbation `u`, so a later reward for that invocation is exactly the
//! learner's one-point query. `refresh` replays all rewarded invocations in
//! id order from the instance's initial parameters and bumps the model
//! version; handles notice the new version on their next `predict`.

mod serve;
mod store;

pub use serve::{handle_request, serve, Server};
pub use store::{
    Handle, Instance, InstanceSpec, InstanceSummary, Invocation, Session, Store, STORE_FORMAT,
};
