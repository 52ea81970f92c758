//! Forward models, priors and likelihoods.

mod gaussian_mean;
mod pendulum;
mod prior;

pub use gaussian_mean::GaussianMeanModel;
pub use pendulum::{
    calibrate_noise_variance, linear_pendulum_angle, pendulum_angle, pendulum_angles,
    pendulum_angles_many,
    pendulum_state, reference_gravity, zero_crossing_times, PendulumConfig, PendulumModel,
    PendulumObservation, PendulumTrajectory, TimeNoise,
};
pub use prior::{gaussian_log_likelihood, GaussianNoise, TruncatedNormalPrior};

use rand::Rng;

use crate::error::Result;

/// A Bayesian model for a static parameter: a prior and a likelihood for
/// observations that are conditionally independent given the parameter.
///
/// Densities are unnormalized; constants cancel during reweighting.
pub trait ForwardModel: Sync {
    type Observation: Sync;

    /// Dimension of the parameter space.
    fn dim(&self) -> usize;

    fn sample_prior<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>>;

    /// Log prior density, `-inf` outside the support.
    fn prior_log_density(&self, theta: &[f64]) -> f64;

    /// Joint log-likelihood of `observations` at `theta`.
    fn log_likelihood(&self, theta: &[f64], observations: &[Self::Observation]) -> Result<f64>;

    /// Unnormalized log posterior after `observations`. Skips the likelihood
    /// outside the prior support.
    fn log_posterior(&self, theta: &[f64], observations: &[Self::Observation]) -> Result<f64> {
        let prior = self.prior_log_density(theta);
        if prior == f64::NEG_INFINITY {
            return Ok(prior);
        }
        Ok(prior + self.log_likelihood(theta, observations)?)
    }

    /// Joint log-likelihoods at several points, stored row-major in
    /// `thetas`. Models that can share work between points override this.
    fn log_likelihood_many(&self, thetas: &[f64], observations: &[Self::Observation]) -> Result<Vec<f64>> {
        thetas
            .chunks_exact(self.dim())
            .map(|t| self.log_likelihood(t, observations))
            .collect()
    }

    /// [`log_posterior`](Self::log_posterior) at several points.
    fn log_posterior_many(&self, thetas: &[f64], observations: &[Self::Observation]) -> Result<Vec<f64>> {
        let dim = self.dim();
        let mut out: Vec<f64> = thetas.chunks_exact(dim).map(|t| self.prior_log_density(t)).collect();
        let inside: Vec<usize> = (0..out.len()).filter(|&i| out[i] != f64::NEG_INFINITY).collect();
        if inside.is_empty() {
            return Ok(out);
        }
        let points: Vec<f64> = inside
            .iter()
            .flat_map(|&i| thetas[i * dim..(i + 1) * dim].iter().copied())
            .collect();
        for (i, ll) in inside.into_iter().zip(self.log_likelihood_many(&points, observations)?) {
            out[i] += ll;
        }
        Ok(out)
    }
}
