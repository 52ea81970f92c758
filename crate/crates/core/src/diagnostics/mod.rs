//! Posterior diagnostics: density estimates, convergence studies, deviation
//! probabilities and distances between particle approximations.

mod convergence;
mod kde;
mod weak;

pub use convergence::{convergence_study, log_log_slope, ConvergenceRow, ConvergenceTable};
pub use kde::{kde, kde_grid, silverman_bandwidth, KdeEstimate};
pub use weak::{
    default_test_family, ks_distance, sup_difference, test_integrals, weak_distance, weak_distance_default, TanhTest,
};

use crate::particle::ParticleApproximation;

/// Posterior probability of `|g - g_true| < eps * g_true` for each `eps`.
///
/// The events are nested, so the output is nondecreasing when `epsilons` is.
pub fn deviation_probability_curve(approx: &ParticleApproximation, g_true: f64, epsilons: &[f64]) -> Vec<f64> {
    epsilons
        .iter()
        .map(|eps| approx.event_probability(|x| (x[0] - g_true).abs() < eps * g_true.abs()))
        .collect()
}

/// Mean-square error bound `4 rho / M` for importance sampling estimates of
/// integrals of functions bounded by one.
pub fn sis_error_bound(rho: f64, m: usize) -> f64 {
    4.0 * rho / m as f64
}
