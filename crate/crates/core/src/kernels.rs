//! Random-walk Metropolis kernels.
//!
//! A kernel targets an unnormalized log-density and proposes isotropic (or
//! per-coordinate) Gaussian steps. Points with a `-inf` log-density are never
//! accepted, so truncated supports need no special treatment. Every step
//! consumes the same number of random draws whether or not it is accepted.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Random-walk Metropolis transition for `target`.
pub struct RwmKernel<F> {
    target: F,
    proposal_std: Vec<f64>,
}

/// Result of one or several Metropolis steps.
#[derive(Debug, Clone, PartialEq)]
pub struct MoveOutcome {
    pub point: Vec<f64>,
    pub log_density: f64,
    pub accepted: usize,
}

/// Retained states of a Metropolis chain.
#[derive(Debug, Clone, PartialEq)]
pub struct McmcRun {
    pub dim: usize,
    /// Row-major retained states.
    pub samples: Vec<f64>,
    pub accepted: usize,
    pub steps: usize,
}

impl McmcRun {
    pub fn len(&self) -> usize {
        self.samples.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.steps == 0 {
            0.0
        } else {
            self.accepted as f64 / self.steps as f64
        }
    }

    pub fn states(&self) -> impl Iterator<Item = &[f64]> {
        self.samples.chunks_exact(self.dim)
    }
}

/// Gaussian random-walk proposal from `x` followed by the uniform used for
/// the acceptance test, in the order every kernel step draws them.
pub fn propose<R: Rng + ?Sized>(x: &[f64], proposal_std: &[f64], rng: &mut R) -> (Vec<f64>, f64) {
    let proposal = x
        .iter()
        .zip(proposal_std)
        .map(|(xi, s)| {
            let z: f64 = StandardNormal.sample(rng);
            xi + s * z
        })
        .collect();
    (proposal, rng.random())
}

/// Metropolis acceptance test for log-densities `proposed` and `current`.
pub fn accepts(u: f64, proposed: f64, current: f64) -> bool {
    u.ln() < proposed - current
}

impl<F> RwmKernel<F>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    pub fn new(target: F, proposal_std: Vec<f64>) -> Result<Self> {
        if proposal_std.is_empty() {
            return Err(Error::Config("proposal needs at least one coordinate".into()));
        }
        if let Some(s) = proposal_std.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(Error::Config(format!("proposal std must be positive, got {s}")));
        }
        Ok(Self { target, proposal_std })
    }

    /// Same proposal std on each of `dim` coordinates.
    pub fn isotropic(target: F, proposal_std: f64, dim: usize) -> Result<Self> {
        Self::new(target, vec![proposal_std; dim])
    }

    pub fn proposal_std(&self) -> &[f64] {
        &self.proposal_std
    }

    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        let lp = (self.target)(x)?;
        if lp.is_nan() || lp == f64::INFINITY {
            return Err(Error::InvalidState);
        }
        Ok(lp)
    }

    /// One Metropolis step. Returns the new point and whether the proposal
    /// was accepted; a rejected step returns `x` unchanged.
    pub fn step<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Result<(Vec<f64>, bool)> {
        let lp = self.start(x)?;
        let out = self.step_from(x, lp, rng)?;
        Ok((out.point, out.accepted == 1))
    }

    fn start(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.proposal_std.len() {
            return Err(Error::Config(format!(
                "point has dimension {}, kernel expects {}",
                x.len(),
                self.proposal_std.len()
            )));
        }
        let lp = self.log_density(x)?;
        if lp == f64::NEG_INFINITY {
            return Err(Error::InvalidState);
        }
        Ok(lp)
    }

    /// One step from `x` whose log-density `log_density_x` is already known.
    pub fn step_from<R: Rng + ?Sized>(
        &self,
        x: &[f64],
        log_density_x: f64,
        rng: &mut R,
    ) -> Result<MoveOutcome> {
        let (proposal, u) = propose(x, &self.proposal_std, rng);
        let lp = if proposal.iter().all(|v| v.is_finite()) {
            self.log_density(&proposal)?
        } else {
            f64::NEG_INFINITY
        };
        if accepts(u, lp, log_density_x) {
            Ok(MoveOutcome {
                point: proposal,
                log_density: lp,
                accepted: 1,
            })
        } else {
            Ok(MoveOutcome {
                point: x.to_vec(),
                log_density: log_density_x,
                accepted: 0,
            })
        }
    }

    /// `n` successive steps from `x`.
    pub fn apply_n<R: Rng + ?Sized>(&self, x: &[f64], n: usize, rng: &mut R) -> Result<Vec<f64>> {
        if n == 0 {
            return Ok(x.to_vec());
        }
        let lp = self.start(x)?;
        Ok(self.apply_n_from(x, lp, n, rng)?.point)
    }

    /// `n` successive steps from a point with known log-density.
    pub fn apply_n_from<R: Rng + ?Sized>(
        &self,
        x: &[f64],
        log_density_x: f64,
        n: usize,
        rng: &mut R,
    ) -> Result<MoveOutcome> {
        let mut state = MoveOutcome {
            point: x.to_vec(),
            log_density: log_density_x,
            accepted: 0,
        };
        for _ in 0..n {
            let next = self.step_from(&state.point, state.log_density, rng)?;
            state = MoveOutcome {
                accepted: state.accepted + next.accepted,
                ..next
            };
        }
        Ok(state)
    }

    /// Runs `n_samples` steps from `x_init` and keeps all states after the
    /// first `burn_in`.
    pub fn mcmc_reference_run<R: Rng + ?Sized>(
        &self,
        x_init: &[f64],
        n_samples: usize,
        burn_in: usize,
        rng: &mut R,
    ) -> Result<McmcRun> {
        if n_samples <= burn_in {
            return Err(Error::Config(format!(
                "chain length {n_samples} must exceed burn-in {burn_in}"
            )));
        }
        let dim = x_init.len();
        let mut lp = self.start(x_init)?;
        let mut x = x_init.to_vec();
        let mut samples = Vec::with_capacity((n_samples - burn_in) * dim);
        let mut accepted = 0;
        for i in 0..n_samples {
            let out = self.step_from(&x, lp, rng)?;
            accepted += out.accepted;
            x = out.point;
            lp = out.log_density;
            if i >= burn_in {
                samples.extend_from_slice(&x);
            }
        }
        Ok(McmcRun {
            dim,
            samples,
            accepted,
            steps: n_samples,
        })
    }
}
