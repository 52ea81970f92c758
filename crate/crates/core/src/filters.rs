//! Sequential importance sampling and sequential Monte Carlo.
//!
//! Both filters start from a Monte Carlo sample of the prior and absorb the
//! observations batch by batch. SIS only reweights. SMC reweights, resamples
//! when the effective sample size drops to the threshold, and then moves every
//! particle with a random-walk Metropolis kernel that leaves the current
//! posterior invariant.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::{accepts, propose};
use crate::models::ForwardModel;
use crate::particle::ParticleApproximation;
use crate::rng::{Purpose, Streams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Sis,
    Smc,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Sis => "sis",
            Algorithm::Smc => "smc",
        })
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sis" => Ok(Algorithm::Sis),
            "smc" => Ok(Algorithm::Smc),
            other => Err(Error::Config(format!("unknown algorithm '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterConfig {
    pub particle_count: usize,
    pub algorithm: Algorithm,
    /// Resample when `ESS <= threshold_fraction * M`.
    pub threshold_fraction: f64,
    /// Metropolis steps per particle and filter step.
    pub mcmc_moves: usize,
    pub proposal_std: f64,
    pub seed: u64,
    /// Only move particles on steps that resampled.
    pub move_only_after_resample: bool,
    /// Keep the particle approximation of every step in the trace.
    pub retain_steps: bool,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            particle_count: 2500,
            algorithm: Algorithm::Smc,
            threshold_fraction: 0.75,
            mcmc_moves: 5,
            proposal_std: 0.25,
            seed: 0,
            move_only_after_resample: false,
            retain_steps: false,
        }
    }
}

impl FilterConfig {
    pub fn sis(particle_count: usize, seed: u64) -> Self {
        Self {
            particle_count,
            algorithm: Algorithm::Sis,
            seed,
            ..Self::default()
        }
    }

    pub fn smc(particle_count: usize, seed: u64) -> Self {
        Self {
            particle_count,
            algorithm: Algorithm::Smc,
            seed,
            ..Self::default()
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn with_particles(&self, particle_count: usize) -> Self {
        Self {
            particle_count,
            ..self.clone()
        }
    }

    /// `M_thresh = threshold_fraction * M`.
    pub fn threshold(&self) -> f64 {
        self.threshold_fraction * self.particle_count as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.particle_count < 2 {
            return Err(Error::Config(format!(
                "need at least 2 particles, got {}",
                self.particle_count
            )));
        }
        if self.algorithm == Algorithm::Smc {
            if !(self.threshold_fraction >= 0.0 && self.threshold_fraction <= 1.0) {
                return Err(Error::Config(format!(
                    "threshold fraction must lie in [0, 1], got {}",
                    self.threshold_fraction
                )));
            }
            if !(self.proposal_std.is_finite() && self.proposal_std > 0.0) {
                return Err(Error::Config(format!(
                    "proposal std must be positive, got {}",
                    self.proposal_std
                )));
            }
        }
        Ok(())
    }
}

/// What happened during one filter step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    /// 1-based step index.
    pub t: usize,
    /// Effective sample size after reweighting, before any resampling.
    pub ess: f64,
    pub resampled: bool,
    pub log_evidence_increment: f64,
    pub posterior_mean: Vec<f64>,
    pub posterior_variance: Vec<f64>,
    /// Fraction of accepted Metropolis proposals, when moves ran.
    pub acceptance_rate: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct FilterTrace {
    pub config: FilterConfig,
    pub records: Vec<StepRecord>,
    /// The prior sample.
    pub initial: ParticleApproximation,
    /// Approximation after the last step.
    pub final_approx: ParticleApproximation,
    /// Approximation after each step, if `retain_steps` was set.
    pub steps: Vec<ParticleApproximation>,
}

impl FilterTrace {
    pub fn cumulative_log_evidence(&self) -> f64 {
        self.records.iter().map(|r| r.log_evidence_increment).sum()
    }

    pub fn resample_count(&self) -> usize {
        self.records.iter().filter(|r| r.resampled).count()
    }

    pub fn resample_steps(&self) -> Vec<usize> {
        self.records.iter().filter(|r| r.resampled).map(|r| r.t).collect()
    }

    pub fn min_ess(&self) -> Option<f64> {
        self.records.iter().map(|r| r.ess).reduce(f64::min)
    }

    pub fn final_mean(&self) -> Vec<f64> {
        self.final_approx.weighted_mean()
    }
}

fn record(t: usize, approx: &ParticleApproximation, ess: f64, resampled: bool, log_z: f64) -> StepRecord {
    StepRecord {
        t,
        ess,
        resampled,
        log_evidence_increment: log_z,
        posterior_mean: approx.weighted_mean(),
        posterior_variance: approx.weighted_variance(),
        acceptance_rate: None,
    }
}

/// Particles handed to a batch evaluator together.
const CHUNK: usize = 32;

/// Evaluates `f` at the particles flagged in `live`, in parallel chunks of
/// [`CHUNK`]; the others get `-inf`. Chunking is fixed, so results do not
/// depend on the thread count.
fn eval_live<F>(positions: &[f64], dim: usize, live: &[bool], f: &F) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    let parts = positions
        .par_chunks(dim * CHUNK)
        .zip(live.par_chunks(CHUNK))
        .map(|(points, alive)| {
            let mut out = vec![f64::NEG_INFINITY; alive.len()];
            let idx: Vec<usize> = (0..alive.len()).filter(|&i| alive[i]).collect();
            if idx.is_empty() {
                return Ok(out);
            }
            let sub: Vec<f64> = idx
                .iter()
                .flat_map(|&i| points[i * dim..(i + 1) * dim].iter().copied())
                .collect();
            for (i, v) in idx.into_iter().zip(f(&sub)?) {
                out[i] = v;
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(parts.concat())
}

/// Lifts a pointwise log-density to the batch form used internally.
fn pointwise<F>(dim: usize, f: F) -> impl Fn(&[f64]) -> Result<Vec<f64>> + Sync
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    move |points: &[f64]| points.chunks_exact(dim).map(&f).collect()
}

fn live_particles(approx: &ParticleApproximation) -> Vec<bool> {
    approx.log_weights().iter().map(|w| *w != f64::NEG_INFINITY).collect()
}

/// One SIS step: reweight by the likelihood of the new observations.
pub fn sis_step<F>(approx: &ParticleApproximation, log_likelihood: F, t: usize) -> Result<(ParticleApproximation, StepRecord)>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    sis_step_batched(approx, &pointwise(approx.dim(), log_likelihood), t)
}

fn sis_step_batched<F>(approx: &ParticleApproximation, log_likelihood: &F, t: usize) -> Result<(ParticleApproximation, StepRecord)>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    let ll = eval_live(approx.flat_positions(), approx.dim(), &live_particles(approx), log_likelihood)?;
    let (next, log_z) = approx.reweight_with(&ll)?;
    let ess = next.effective_sample_size();
    let rec = record(t, &next, ess, false, log_z);
    Ok((next, rec))
}

/// Particle cloud together with each particle's current unnormalized log
/// posterior, so Metropolis moves need not re-evaluate the starting point.
#[derive(Debug, Clone)]
pub struct SmcState {
    pub approx: ParticleApproximation,
    pub log_posterior: Vec<f64>,
}

impl SmcState {
    /// Wraps a cloud, evaluating `log_posterior` at every particle.
    pub fn new<T>(approx: ParticleApproximation, log_posterior: T) -> Result<Self>
    where
        T: Fn(&[f64]) -> Result<f64> + Sync,
    {
        let f = pointwise(approx.dim(), log_posterior);
        Self::new_batched(approx, &f)
    }

    fn new_batched<T>(approx: ParticleApproximation, log_posterior: &T) -> Result<Self>
    where
        T: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
    {
        let all = vec![true; approx.len()];
        let lp = eval_live(approx.flat_positions(), approx.dim(), &all, log_posterior)?;
        Ok(Self {
            approx,
            log_posterior: lp,
        })
    }
}

/// One SMC step: reweight, resample if `ESS <= threshold`, then apply the
/// Metropolis kernel for `target` (the posterior after this step)
/// `mcmc_moves` times to every particle.
///
/// `t` is the 1-based step index; it selects the random substreams.
pub fn smc_step<F, T>(
    state: &SmcState,
    log_likelihood: F,
    target: T,
    config: &FilterConfig,
    streams: &Streams,
    t: usize,
) -> Result<(SmcState, StepRecord)>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
    T: Fn(&[f64]) -> Result<f64> + Sync,
{
    let dim = state.approx.dim();
    smc_step_batched(
        state,
        &pointwise(dim, log_likelihood),
        &pointwise(dim, target),
        config,
        streams,
        t,
    )
}

fn smc_step_batched<F, T>(
    state: &SmcState,
    log_likelihood: &F,
    target: &T,
    config: &FilterConfig,
    streams: &Streams,
    t: usize,
) -> Result<(SmcState, StepRecord)>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
    T: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    let dim = state.approx.dim();
    let ll = eval_live(
        state.approx.flat_positions(),
        dim,
        &live_particles(&state.approx),
        log_likelihood,
    )?;
    let (reweighted, log_z) = state.approx.reweight_with(&ll)?;
    let mut log_post: Vec<f64> = state
        .log_posterior
        .iter()
        .zip(&ll)
        .map(|(p, l)| p + l)
        .collect();

    let decision = reweighted.resample_decision(config.threshold());
    let mut approx = if decision.resampled {
        let mut rng = streams.stream(Purpose::Resample, t as u64, 0);
        let indices = reweighted.resample_indices(&mut rng);
        log_post = indices.iter().map(|&j| log_post[j]).collect();
        reweighted.select(&indices)
    } else {
        reweighted
    };

    let mut acceptance_rate = None;
    let do_moves = config.mcmc_moves > 0 && (decision.resampled || !config.move_only_after_resample);
    if do_moves {
        let (positions, lp, accepted) = move_particles(&approx, &log_post, target, config, streams, t)?;
        approx = approx.with_positions(positions)?;
        log_post = lp;
        acceptance_rate = Some(accepted as f64 / (config.mcmc_moves * approx.len()) as f64);
    }

    let mut rec = record(t, &approx, decision.ess, decision.resampled, log_z);
    rec.acceptance_rate = acceptance_rate;
    Ok((
        SmcState {
            approx,
            log_posterior: log_post,
        },
        rec,
    ))
}

/// `mcmc_moves` random-walk Metropolis steps for every live particle. Each
/// particle draws from its own substream; proposals of a chunk are
/// evaluated together.
fn move_particles<T>(
    approx: &ParticleApproximation,
    log_post: &[f64],
    target: &T,
    config: &FilterConfig,
    streams: &Streams,
    t: usize,
) -> Result<(Vec<f64>, Vec<f64>, usize)>
where
    T: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    let dim = approx.dim();
    let std = vec![config.proposal_std; dim];
    // Dead particles (possible without resampling) stay put.
    let live: Vec<bool> = approx
        .log_weights()
        .iter()
        .zip(log_post)
        .map(|(w, lp)| *w != f64::NEG_INFINITY && *lp != f64::NEG_INFINITY)
        .collect();
    let parts = approx
        .flat_positions()
        .par_chunks(dim * CHUNK)
        .zip(log_post.par_chunks(CHUNK))
        .zip(live.par_chunks(CHUNK))
        .enumerate()
        .map(|(c, ((points, lps), alive))| {
            let mut points = points.to_vec();
            let mut lps = lps.to_vec();
            let mut rngs: Vec<_> = alive
                .iter()
                .enumerate()
                .map(|(j, &a)| a.then(|| streams.stream(Purpose::Move, t as u64, (c * CHUNK + j) as u64)))
                .collect();
            let mut accepted = 0;
            for _ in 0..config.mcmc_moves {
                let mut idx = Vec::with_capacity(CHUNK);
                let mut uniforms = Vec::with_capacity(CHUNK);
                let mut proposals = Vec::with_capacity(CHUNK * dim);
                for (j, rng) in rngs.iter_mut().enumerate() {
                    let Some(rng) = rng else { continue };
                    let (y, u) = propose(&points[j * dim..(j + 1) * dim], &std, rng);
                    // A non-finite proposal has zero density and is rejected.
                    if y.iter().all(|v| v.is_finite()) {
                        idx.push(j);
                        uniforms.push(u);
                        proposals.extend_from_slice(&y);
                    }
                }
                if idx.is_empty() {
                    continue;
                }
                let values = target(&proposals)?;
                for (k, (&j, u)) in idx.iter().zip(uniforms).enumerate() {
                    let lp = values[k];
                    if lp.is_nan() || lp == f64::INFINITY {
                        return Err(Error::InvalidState);
                    }
                    if accepts(u, lp, lps[j]) {
                        points[j * dim..(j + 1) * dim].copy_from_slice(&proposals[k * dim..(k + 1) * dim]);
                        lps[j] = lp;
                        accepted += 1;
                    }
                }
            }
            Ok((points, lps, accepted))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut positions = Vec::with_capacity(approx.len() * dim);
    let mut lp = Vec::with_capacity(approx.len());
    let mut accepted = 0;
    for (p, l, a) in parts {
        positions.extend(p);
        lp.extend(l);
        accepted += a;
    }
    Ok((positions, lp, accepted))
}

/// Draws the prior sample `mu_0^M` for a run with this configuration.
pub fn initial_sample<M: ForwardModel>(model: &M, config: &FilterConfig) -> Result<ParticleApproximation> {
    let streams = Streams::new(config.seed);
    let mut rng = streams.stream(Purpose::Prior, 0, 0);
    ParticleApproximation::monte_carlo(|r| model.sample_prior(r), config.particle_count, &mut rng)
}

/// Runs SIS or SMC over `batches`; each batch is absorbed in one step.
pub fn run_filter<M>(model: &M, batches: &[Vec<M::Observation>], config: &FilterConfig) -> Result<FilterTrace>
where
    M: ForwardModel,
    M::Observation: Clone,
{
    config.validate()?;
    if batches.iter().any(|b| b.is_empty()) {
        return Err(Error::Config("observation batches must not be empty".into()));
    }
    let streams = Streams::new(config.seed);
    let initial = initial_sample(model, config)?;
    let mut records = Vec::with_capacity(batches.len());
    let mut steps = Vec::new();

    let final_approx = match config.algorithm {
        Algorithm::Sis => {
            let mut approx = initial.clone();
            for (i, batch) in batches.iter().enumerate() {
                let (next, rec) = sis_step_batched(&approx, &|x: &[f64]| model.log_likelihood_many(x, batch), i + 1)?;
                approx = next;
                records.push(rec);
                if config.retain_steps {
                    steps.push(approx.clone());
                }
            }
            approx
        }
        Algorithm::Smc => {
            let mut history: Vec<M::Observation> = Vec::new();
            let mut state = SmcState::new(initial.clone(), |x| Ok(model.prior_log_density(x)))?;
            for (i, batch) in batches.iter().enumerate() {
                history.extend(batch.iter().cloned());
                let (next, rec) = smc_step_batched(
                    &state,
                    &|x: &[f64]| model.log_likelihood_many(x, batch),
                    &|x: &[f64]| model.log_posterior_many(x, &history),
                    config,
                    &streams,
                    i + 1,
                )?;
                state = next;
                records.push(rec);
                if config.retain_steps {
                    steps.push(state.approx.clone());
                }
            }
            state.approx
        }
    };

    Ok(FilterTrace {
        config: config.clone(),
        records,
        initial,
        final_approx,
        steps,
    })
}

/// One batch per observation.
pub fn singleton_batches<T: Clone>(observations: &[T]) -> Vec<Vec<T>> {
    observations.iter().map(|o| vec![o.clone()]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::GaussianMeanModel;

    /// Discrete uniform prior on {1, ..., 10} with an indicator likelihood.
    struct AboutFour;

    impl ForwardModel for AboutFour {
        type Observation = ();

        fn dim(&self) -> usize {
            1
        }

        fn sample_prior<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
            Ok(vec![rng.random_range(1..=10) as f64])
        }

        fn prior_log_density(&self, x: &[f64]) -> f64 {
            if (1.0..=10.0).contains(&x[0]) && x[0].fract() == 0.0 {
                0.0
            } else {
                f64::NEG_INFINITY
            }
        }

        fn log_likelihood(&self, x: &[f64], _: &[()]) -> Result<f64> {
            Ok(if (3.0..=5.0).contains(&x[0]) { 0.0 } else { f64::NEG_INFINITY })
        }
    }

    #[test]
    fn sis_discrete_update() {
        let prior = ParticleApproximation::uniform(1, (1..=10).map(f64::from).collect()).unwrap();
        let (post, rec) = sis_step(&prior, |x| AboutFour.log_likelihood(x, &[]), 1).unwrap();
        for (x, w) in post.positions().zip(post.weights()) {
            let expected = if (3.0..=5.0).contains(&x[0]) { 1.0 / 3.0 } else { 0.0 };
            assert!((w - expected).abs() < 1e-15);
        }
        assert!((rec.ess - 3.0).abs() < 1e-12);
        assert!((rec.log_evidence_increment - 0.3f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn sis_constant_likelihood_is_identity() {
        let prior = ParticleApproximation::from_weights(1, vec![1.0, 2.0, 3.0], &[0.2, 0.5, 0.3]).unwrap();
        let (post, rec) = sis_step(&prior, |_| Ok(-2.0), 1).unwrap();
        for (a, b) in prior.log_weights().iter().zip(post.log_weights()) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!((rec.ess - prior.effective_sample_size()).abs() < 1e-9);
    }

    #[test]
    fn smc_without_moves_or_resampling_equals_sis() {
        let model = GaussianMeanModel::new(0.5);
        let ys = [0.3, 1.1, -0.2, 0.9];
        let batches = singleton_batches(&ys);
        let sis = run_filter(&model, &batches, &FilterConfig::sis(200, 3)).unwrap();
        let smc_cfg = FilterConfig {
            threshold_fraction: 0.0,
            mcmc_moves: 0,
            ..FilterConfig::smc(200, 3)
        };
        let smc = run_filter(&model, &batches, &smc_cfg).unwrap();
        assert_eq!(sis.initial, smc.initial);
        for (a, b) in sis.final_approx.log_weights().iter().zip(smc.final_approx.log_weights()) {
            assert!((a - b).abs() < 1e-10);
        }
        assert_eq!(smc.resample_count(), 0);
    }

    #[test]
    fn smc_collapse_propagates() {
        let prior = ParticleApproximation::uniform(1, vec![1.0, 2.0]).unwrap();
        let state = SmcState::new(prior, |_| Ok(0.0)).unwrap();
        let err = smc_step(
            &state,
            |_| Ok(f64::NEG_INFINITY),
            |_| Ok(0.0),
            &FilterConfig::smc(2, 0),
            &Streams::new(0),
            1,
        )
        .unwrap_err();
        assert!(matches!(err, Error::LikelihoodCollapse));
    }

    #[test]
    fn discrete_example_through_run_filter() {
        let cfg = FilterConfig::sis(4000, 17);
        let trace = run_filter(&AboutFour, &[vec![()]], &cfg).unwrap();
        let post = &trace.final_approx;
        for k in [3.0, 4.0, 5.0] {
            let p = post.event_probability(|x| x[0] == k);
            assert!((p - 1.0 / 3.0).abs() < 0.03, "{k}: {p}");
        }
        assert_eq!(post.event_probability(|x| x[0] < 3.0 || x[0] > 5.0), 0.0);
    }

    #[test]
    fn empty_batch_list_returns_prior() {
        let model = GaussianMeanModel::new(0.0);
        let trace = run_filter(&model, &[], &FilterConfig::smc(50, 1)).unwrap();
        assert!(trace.records.is_empty());
        assert_eq!(trace.final_approx, trace.initial);
        assert!(run_filter(&model, &[vec![]], &FilterConfig::smc(50, 1)).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(FilterConfig::smc(1, 0).validate().is_err());
        let bad = FilterConfig {
            threshold_fraction: 1.5,
            ..FilterConfig::smc(10, 0)
        };
        assert!(bad.validate().is_err());
        assert_eq!("SMC".parse::<Algorithm>().unwrap(), Algorithm::Smc);
        assert!("pf".parse::<Algorithm>().is_err());
    }

    #[test]
    fn retained_steps_and_summaries() {
        let model = GaussianMeanModel::new(0.5);
        let batches = singleton_batches(&[0.3, 1.1, -0.2]);
        let cfg = FilterConfig {
            retain_steps: true,
            ..FilterConfig::smc(300, 9)
        };
        let trace = run_filter(&model, &batches, &cfg).unwrap();
        assert_eq!(trace.steps.len(), 3);
        assert_eq!(trace.records.len(), 3);
        assert_eq!(trace.steps[2], trace.final_approx);
        let total: f64 = trace.records.iter().map(|r| r.log_evidence_increment).sum();
        assert_eq!(trace.cumulative_log_evidence(), total);
        assert!(trace.records.iter().all(|r| r.acceptance_rate.is_some()));
    }
}
