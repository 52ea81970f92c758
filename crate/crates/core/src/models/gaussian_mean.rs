//! Estimating the mean of `N(m, 1)` under the conjugate prior `N(0, 1)`.
//!
//! The posterior after `t` observations with sum `S_t` is
//! `N(S_t / (t + 1), 1 / (t + 1))`, which makes this model an analytic
//! oracle for the filters.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::ForwardModel;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianMeanModel {
    /// Mean of the data-generating distribution.
    pub true_mean: f64,
    /// Sum of the observations absorbed so far.
    pub running_sum: f64,
    /// Number of observations absorbed so far.
    pub count: u64,
}

impl GaussianMeanModel {
    pub fn new(true_mean: f64) -> Self {
        Self {
            true_mean,
            running_sum: 0.0,
            count: 0,
        }
    }

    pub fn with_sum(running_sum: f64, count: u64) -> Self {
        Self {
            true_mean: 0.0,
            running_sum,
            count,
        }
    }

    pub fn observe(&mut self, y: f64) {
        self.running_sum += y;
        self.count += 1;
    }

    /// Draws `n` observations from `N(true_mean, 1)`.
    pub fn simulate<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                self.true_mean + z
            })
            .collect()
    }

    /// Posterior `(mean, variance)` after the absorbed observations.
    pub fn conjugate_posterior(&self) -> (f64, f64) {
        let n = self.count as f64 + 1.0;
        (self.running_sum / n, 1.0 / n)
    }

    /// Second-moment ratio of the joint likelihood under the prior; `M / rho_t`
    /// is the effective sample size of importance sampling from the prior.
    pub fn rho_t(&self) -> f64 {
        let t = self.count as f64;
        let s = self.running_sum;
        (t + 1.0) / (2.0 * t + 1.0).sqrt() * (s * s / ((2.0 * t + 1.0) * (t + 1.0))).exp()
    }
}

impl ForwardModel for GaussianMeanModel {
    type Observation = f64;

    fn dim(&self) -> usize {
        1
    }

    fn sample_prior<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        Ok(vec![StandardNormal.sample(rng)])
    }

    fn prior_log_density(&self, theta: &[f64]) -> f64 {
        -0.5 * theta[0] * theta[0]
    }

    fn log_likelihood(&self, theta: &[f64], observations: &[f64]) -> Result<f64> {
        Ok(observations
            .iter()
            .map(|y| {
                let r = y - theta[0];
                -0.5 * r * r
            })
            .sum())
    }
}
