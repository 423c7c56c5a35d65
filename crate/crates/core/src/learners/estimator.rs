//! Unbiased sphere-smoothing gradient estimators.
//!
//! For `u` uniform on the unit sphere in `R^m`,
//! `E[(m/δ)·r(a+δu)·u] = ∇ E_v[r(a + δv)]` with `v` uniform in the unit ball;
//! the symmetric two-point form has the same mean and, for smooth rewards,
//! far smaller variance.

/// `(m/δ)·r·u`, with `r` observed at `a + δu`.
pub fn one_point_estimate(reward: f64, u: &[f64], delta: f64) -> Vec<f64> {
    let f = u.len() as f64 / delta * reward;
    u.iter().map(|v| f * v).collect()
}

/// `(m/2δ)·(r⁺ − r⁻)·u`, with `r±` observed at `a ± δu`.
pub fn two_point_estimate(r_plus: f64, r_minus: f64, u: &[f64], delta: f64) -> Vec<f64> {
    let f = u.len() as f64 / (2.0 * delta) * (r_plus - r_minus);
    u.iter().map(|v| f * v).collect()
}
