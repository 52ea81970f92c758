//! Weighted particle approximations of probability measures.
//!
//! A [`ParticleApproximation`] stores `M` points of dimension `N` together with
//! normalized log-weights. Every constructor and every operation returns a
//! normalized value: the log-sum-exp of the log-weights is zero up to rounding.
//! Particles whose likelihood vanished carry a log-weight of `-inf`; they keep
//! their position until the next resampling step removes them.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// `M` weighted points in `R^N`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleApproximation {
    dim: usize,
    positions: Vec<f64>,
    log_weights: Vec<f64>,
}

/// Outcome of comparing the effective sample size against a threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResampleDecision {
    pub ess: f64,
    pub threshold: f64,
    pub resampled: bool,
}

impl ResampleDecision {
    pub fn new(ess: f64, threshold: f64) -> Self {
        Self {
            ess,
            threshold,
            resampled: ess <= threshold,
        }
    }
}

/// `log(sum(exp(values)))`, returning `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

impl ParticleApproximation {
    /// Builds an approximation from flat row-major positions and unnormalized
    /// log-weights.
    pub fn from_log_weights(dim: usize, positions: Vec<f64>, log_weights: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("parameter dimension must be positive".into()));
        }
        if log_weights.is_empty() {
            return Err(Error::Config("a particle approximation needs at least one particle".into()));
        }
        if positions.len() != dim * log_weights.len() {
            return Err(Error::Config(format!(
                "{} coordinates do not fit {} particles of dimension {dim}",
                positions.len(),
                log_weights.len()
            )));
        }
        if let Some(i) = positions.iter().position(|x| !x.is_finite()) {
            return Err(Error::RejectedSample { index: i / dim });
        }
        if let Some(i) = log_weights.iter().position(|w| w.is_nan() || *w == f64::INFINITY) {
            return Err(Error::Evaluation { index: i });
        }
        let mut approx = Self {
            dim,
            positions,
            log_weights,
        };
        approx.normalize()?;
        Ok(approx)
    }

    /// Builds an approximation from linear (not necessarily normalized) weights.
    pub fn from_weights(dim: usize, positions: Vec<f64>, weights: &[f64]) -> Result<Self> {
        if let Some(i) = weights.iter().position(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Evaluation { index: i });
        }
        let log_weights = weights.iter().map(|w| w.ln()).collect();
        Self::from_log_weights(dim, positions, log_weights)
    }

    /// Equally weighted points.
    pub fn uniform(dim: usize, positions: Vec<f64>) -> Result<Self> {
        let m = positions.len() / dim.max(1);
        Self::from_log_weights(dim, positions, vec![0.0; m])
    }

    /// Equally weighted one-dimensional points.
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        Self::uniform(1, samples.to_vec())
    }

    /// Standard Monte Carlo approximation: `m` independent draws from `sampler`,
    /// each weighted `1/m`.
    pub fn monte_carlo<R, F>(mut sampler: F, m: usize, rng: &mut R) -> Result<Self>
    where
        R: Rng + ?Sized,
        F: FnMut(&mut R) -> Result<Vec<f64>>,
    {
        if m == 0 {
            return Err(Error::Config("particle count must be at least 1".into()));
        }
        let mut positions = Vec::new();
        let mut dim = 0;
        for index in 0..m {
            let point = sampler(rng)?;
            if index == 0 {
                dim = point.len();
                positions.reserve(dim * m);
            } else if point.len() != dim {
                return Err(Error::Config(format!(
                    "sampler returned dimension {} at draw {index}, expected {dim}",
                    point.len()
                )));
            }
            if point.iter().any(|x| !x.is_finite()) {
                return Err(Error::RejectedSample { index });
            }
            positions.extend_from_slice(&point);
        }
        let log_weight = -(m as f64).ln();
        Ok(Self {
            dim,
            positions,
            log_weights: vec![log_weight; m],
        })
    }

    fn normalize(&mut self) -> Result<f64> {
        let lse = log_sum_exp(&self.log_weights);
        if lse == f64::NEG_INFINITY {
            return Err(Error::LikelihoodCollapse);
        }
        for w in &mut self.log_weights {
            *w -= lse;
        }
        Ok(lse)
    }

    pub fn len(&self) -> usize {
        self.log_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn position(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    pub fn positions(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.positions.chunks_exact(self.dim)
    }

    /// Row-major coordinates of all particles.
    pub fn flat_positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn weights(&self) -> Vec<f64> {
        self.log_weights.iter().map(|w| w.exp()).collect()
    }

    /// Same weights, new positions. Used by Markov moves that transport each
    /// particle individually.
    pub fn with_positions(&self, positions: Vec<f64>) -> Result<Self> {
        if positions.len() != self.positions.len() {
            return Err(Error::Config("position count changed".into()));
        }
        if let Some(i) = positions.iter().position(|x| !x.is_finite()) {
            return Err(Error::RejectedSample { index: i / self.dim });
        }
        Ok(Self {
            dim: self.dim,
            positions,
            log_weights: self.log_weights.clone(),
        })
    }

    /// `sum_i W_i f(X_i)`.
    pub fn integrate<F>(&self, f: F) -> Result<f64>
    where
        F: Fn(&[f64]) -> f64,
    {
        let mut total = 0.0;
        for (index, (x, lw)) in self.positions().zip(&self.log_weights).enumerate() {
            let value = f(x);
            if !value.is_finite() {
                return Err(Error::Evaluation { index });
            }
            total += lw.exp() * value;
        }
        Ok(total)
    }

    /// Weighted mass of the particles satisfying `predicate`. Normalized by
    /// the total mass, so an event containing every particle has probability
    /// exactly one.
    pub fn event_probability<P>(&self, predicate: P) -> f64
    where
        P: Fn(&[f64]) -> bool,
    {
        let (mut inside, mut outside) = (0.0, 0.0);
        for (x, lw) in self.positions().zip(&self.log_weights) {
            if predicate(x) {
                inside += lw.exp();
            } else {
                outside += lw.exp();
            }
        }
        inside / (inside + outside)
    }

    /// Importance reweighting by a likelihood. Returns the reweighted
    /// approximation and the log-evidence increment `log sum_i W_i L(X_i)`.
    pub fn reweight<F>(&self, log_likelihood: F) -> Result<(Self, f64)>
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        self.try_reweight(|x| Ok(log_likelihood(x)))
    }

    /// [`reweight`](Self::reweight) for fallible likelihoods. Evaluations run
    /// in parallel; the result does not depend on the thread count.
    pub fn try_reweight<F>(&self, log_likelihood: F) -> Result<(Self, f64)>
    where
        F: Fn(&[f64]) -> Result<f64> + Sync,
    {
        let values = self
            .positions
            .par_chunks_exact(self.dim)
            .zip(self.log_weights.par_iter())
            .map(|(x, lw)| {
                // Dead particles stay dead; skip the (possibly expensive) model.
                if *lw == f64::NEG_INFINITY {
                    Ok(f64::NEG_INFINITY)
                } else {
                    log_likelihood(x)
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        self.reweight_with(&values)
    }

    /// Reweighting with precomputed per-particle log-likelihoods.
    pub fn reweight_with(&self, log_likelihoods: &[f64]) -> Result<(Self, f64)> {
        if log_likelihoods.len() != self.len() {
            return Err(Error::Config("one log-likelihood per particle required".into()));
        }
        if let Some(index) = log_likelihoods
            .iter()
            .position(|l| l.is_nan() || *l == f64::INFINITY)
        {
            return Err(Error::Evaluation { index });
        }
        let log_weights: Vec<f64> = self
            .log_weights
            .iter()
            .zip(log_likelihoods)
            .map(|(w, l)| w + l)
            .collect();
        let mut out = Self {
            dim: self.dim,
            positions: self.positions.clone(),
            log_weights,
        };
        let log_evidence = out.normalize()?;
        Ok((out, log_evidence))
    }

    /// `1 / sum_i W_i^2`.
    pub fn effective_sample_size(&self) -> f64 {
        let sum_sq: f64 = self.log_weights.iter().map(|w| (2.0 * w).exp()).sum();
        (1.0 / sum_sq).clamp(1.0, self.len() as f64)
    }

    pub fn resample_decision(&self, threshold: f64) -> ResampleDecision {
        ResampleDecision::new(self.effective_sample_size(), threshold)
    }

    /// Multinomial resampling by inverting the cumulative weight function with
    /// `M` iid uniforms. Output weights are all `1/M`.
    pub fn resample<R: Rng + ?Sized>(&self, rng: &mut R) -> Self {
        let indices = self.resample_indices(rng);
        self.select(&indices)
    }

    /// Ancestor indices drawn by [`resample`](Self::resample): output particle
    /// `i` is a copy of input particle `indices[i]`.
    pub fn resample_indices<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        let m = self.len();
        let cumulative = self.cumulative_weights();
        (0..m)
            .map(|_| {
                // Uniform on (0, 1]; zero-weight particles are never selected.
                let u = 1.0 - rng.random::<f64>();
                cumulative.partition_point(|&c| c < u).min(m - 1)
            })
            .collect()
    }

    /// Equally weighted copies of the particles at `indices`.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut positions = Vec::with_capacity(indices.len() * self.dim);
        for &j in indices {
            positions.extend_from_slice(self.position(j));
        }
        let m = indices.len();
        Self {
            dim: self.dim,
            positions,
            log_weights: vec![-(m as f64).ln(); m],
        }
    }

    fn cumulative_weights(&self) -> Vec<f64> {
        let mut acc = 0.0;
        let mut cumulative: Vec<f64> = self
            .log_weights
            .iter()
            .map(|w| {
                acc += w.exp();
                acc
            })
            .collect();
        // The last partial sum may round to 1 - ulp.
        if let Some(last) = cumulative.last_mut() {
            *last = 1.0;
        }
        cumulative
    }

    /// Per-coordinate weighted mean, accumulated relative to the first
    /// particle so a constant cloud returns its value exactly.
    pub fn weighted_mean(&self) -> Vec<f64> {
        let origin = self.position(0).to_vec();
        let mut shift = vec![0.0; self.dim];
        let mut total = 0.0;
        for (x, lw) in self.positions().zip(&self.log_weights) {
            let w = lw.exp();
            total += w;
            for ((s, xi), o) in shift.iter_mut().zip(x).zip(&origin) {
                *s += w * (xi - o);
            }
        }
        origin.iter().zip(shift).map(|(o, s)| o + s / total).collect()
    }

    /// Per-coordinate weighted variance, `sum_i W_i (X_i - mean)^2`.
    pub fn weighted_variance(&self) -> Vec<f64> {
        let mean = self.weighted_mean();
        let mut second = vec![0.0; self.dim];
        let mut total = 0.0;
        for (x, lw) in self.positions().zip(&self.log_weights) {
            let w = lw.exp();
            total += w;
            for ((s, xi), m) in second.iter_mut().zip(x).zip(&mean) {
                *s += w * (xi - m) * (xi - m);
            }
        }
        second.into_iter().map(|s| s / total).collect()
    }

    /// One coordinate of every particle.
    pub fn coordinate(&self, k: usize) -> Vec<f64> {
        self.positions().map(|x| x[k]).collect()
    }
}
