//! Command-line front end: runs the filters and studies described by a JSON
//! configuration and writes CSV tables and a JSON summary.

pub mod config;

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::diagnostics::{self, convergence_study, kde, kde_grid, silverman_bandwidth, ConvergenceTable};
use crate::error::{Error, Result};
use crate::filters::{run_filter, singleton_batches, Algorithm, FilterTrace};
use crate::io;
use crate::kernels::RwmKernel;
use crate::models::{
    calibrate_noise_variance, zero_crossing_times, ForwardModel, GaussianMeanModel, PendulumModel,
    PendulumObservation,
};
use crate::particle::ParticleApproximation;
use crate::rng::{Purpose, Streams};
pub use config::RunConfig;
use config::{ModelSection, Schedule};

/// Environment variable overriding the configured seed.
pub const SEED_ENV: &str = "SEQUIFILT_SEED";

#[derive(Debug, Parser)]
#[command(name = "sequifilt", version, about = "Sequential Monte Carlo for static parameters")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sequential importance sampling.
    Sis(CommonArgs),
    /// Sequential Monte Carlo with resampling and Metropolis moves.
    Smc(CommonArgs),
    /// Random-walk Metropolis reference chain for the final posterior.
    #[command(name = "mcmc-ref")]
    McmcRef(CommonArgs),
    /// Variance of the posterior-mean estimate against the particle count.
    Convergence(CommonArgs),
    /// Monte Carlo estimate of the angle noise variance from timing error.
    #[command(name = "calibrate-noise")]
    CalibrateNoise(CommonArgs),
    /// Compare the filter with the exact conjugate posterior.
    #[command(name = "oracle-check")]
    OracleCheck(CommonArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// JSON run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Override the particle count.
    #[arg(long)]
    pub particles: Option<usize>,
    /// Override the output directory.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Worker threads (results do not depend on this).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Override the seed (takes precedence over SEQUIFILT_SEED).
    #[arg(long)]
    pub seed: Option<u64>,
}

impl Command {
    pub fn args(&self) -> &CommonArgs {
        match self {
            Command::Sis(a)
            | Command::Smc(a)
            | Command::McmcRef(a)
            | Command::Convergence(a)
            | Command::CalibrateNoise(a)
            | Command::OracleCheck(a) => a,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Command::Sis(_) => "sis",
            Command::Smc(_) => "smc",
            Command::McmcRef(_) => "mcmc-ref",
            Command::Convergence(_) => "convergence",
            Command::CalibrateNoise(_) => "calibrate-noise",
            Command::OracleCheck(_) => "oracle-check",
        }
    }
}

/// Process exit code for an error: 3 for numerical failures, 2 otherwise.
pub fn exit_code(err: &Error) -> i32 {
    if err.is_numerical() {
        3
    } else {
        2
    }
}

/// Loads the configuration, applies overrides and runs the command on a
/// thread pool of the requested size. Returns the lines to print.
pub fn run(cli: &Cli) -> Result<Vec<String>> {
    let args = cli.command.args();
    let mut config = RunConfig::load(&args.config)?;
    if let Ok(seed) = std::env::var(SEED_ENV) {
        config.filter.seed = seed
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("{SEED_ENV}='{seed}' is not an unsigned integer")))?;
    }
    if let Some(seed) = args.seed {
        config.filter.seed = seed;
    }
    if let Some(m) = args.particles {
        config.filter.particles = m;
    }
    if let Some(dir) = &args.output {
        config.output_dir = dir.clone();
    }
    config.validate()?;

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = args.threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| dispatch(&cli.command, &config))
}

fn dispatch(command: &Command, config: &RunConfig) -> Result<Vec<String>> {
    let problem = Problem::from_config(config)?;
    match command {
        Command::Sis(_) => problem.filter(config, Algorithm::Sis, "sis"),
        Command::Smc(_) => problem.filter(config, Algorithm::Smc, "smc"),
        Command::McmcRef(_) => problem.mcmc(config),
        Command::Convergence(_) => problem.convergence(config),
        Command::CalibrateNoise(_) => calibrate(config),
        Command::OracleCheck(_) => problem.oracle(config),
    }
}

enum Problem {
    Pendulum(PendulumModel, Vec<Vec<PendulumObservation>>),
    Gaussian(GaussianMeanModel, Vec<Vec<f64>>),
}

/// Runs `$body` with `$model` and `$batches` bound to the concrete problem.
macro_rules! with_problem {
    ($problem:expr, |$model:ident, $batches:ident| $body:expr) => {
        match $problem {
            Problem::Pendulum($model, $batches) => $body,
            Problem::Gaussian($model, $batches) => $body,
        }
    };
}

#[derive(Serialize)]
struct StepSummary {
    t: usize,
    ess: f64,
    resampled: bool,
    log_evidence_increment: f64,
    posterior_mean: Vec<f64>,
    posterior_variance: Vec<f64>,
    acceptance_rate: Option<f64>,
}

#[derive(Serialize)]
struct FilterSummary<'a> {
    command: &'a str,
    algorithm: String,
    seed: u64,
    particles: usize,
    observations: usize,
    steps: Vec<StepSummary>,
    cumulative_log_evidence: f64,
    resample_count: usize,
    resample_steps: Vec<usize>,
    final_mean: Vec<f64>,
    final_variance: Vec<f64>,
    g_true: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle: Option<OracleSummary>,
    runtime_seconds: f64,
}

#[derive(Serialize, Clone)]
struct OracleSummary {
    exact_means: Vec<f64>,
    exact_variances: Vec<f64>,
    max_abs_mean_error: f64,
    tolerance: f64,
    passed: bool,
}

impl Problem {
    fn from_config(config: &RunConfig) -> Result<Self> {
        match config.model {
            ModelSection::Pendulum { .. } => {
                let model = PendulumModel::new(config.pendulum()?, config.prior_dist()?, config.noise_model()?)?;
                let data = config.data.as_ref().ok_or_else(|| Error::Config("missing data file".into()))?;
                let mut set = io::parse_measurements(data)?;
                for extra in &config.extra_data {
                    set.extend(io::parse_measurements(extra)?);
                }
                Ok(Problem::Pendulum(model, set.batches()))
            }
            ModelSection::GaussianMean { true_mean, observations } => {
                let mut model = GaussianMeanModel::new(true_mean);
                let mut rng = Streams::new(config.filter.seed).stream(Purpose::Synthetic, 0, 0);
                let ys = model.simulate(observations, &mut rng);
                for y in &ys {
                    model.observe(*y);
                }
                Ok(Problem::Gaussian(model, singleton_batches(&ys)))
            }
        }
    }

    fn observation_count(&self) -> usize {
        with_problem!(self, |_m, batches| batches.iter().map(Vec::len).sum())
    }

    fn filter(&self, config: &RunConfig, algorithm: Algorithm, command: &str) -> Result<Vec<String>> {
        let cfg = config.filter_config(algorithm)?;
        let start = Instant::now();
        let trace = with_problem!(self, |model, batches| run_filter(model, batches, &cfg)?);
        let runtime = start.elapsed().as_secs_f64();
        let summary = filter_summary(command, &trace, self.observation_count(), config, None, runtime);
        write_filter_outputs(config, &trace, &summary)?;
        Ok(filter_report(&summary, &config.output_dir))
    }

    fn oracle(&self, config: &RunConfig) -> Result<Vec<String>> {
        let Problem::Gaussian(_, batches) = self else {
            return Err(Error::Config("oracle-check needs the gaussian_mean model".into()));
        };
        let section = config
            .oracle
            .as_ref()
            .ok_or_else(|| Error::Config("oracle-check needs an 'oracle' section".into()))?;
        let algorithm: Algorithm = section.algorithm.parse()?;
        let cfg = config.filter_config(algorithm)?;
        let start = Instant::now();
        let trace = with_problem!(self, |model, batches| run_filter(model, batches, &cfg)?);
        let runtime = start.elapsed().as_secs_f64();

        let mut exact = GaussianMeanModel::new(0.0);
        let mut exact_means = Vec::new();
        let mut exact_variances = Vec::new();
        for batch in batches {
            for y in batch {
                exact.observe(*y);
            }
            let (m, v) = exact.conjugate_posterior();
            exact_means.push(m);
            exact_variances.push(v);
        }
        let max_abs_mean_error = trace
            .records
            .iter()
            .zip(&exact_means)
            .map(|(r, m)| (r.posterior_mean[0] - m).abs())
            .fold(0.0, f64::max);
        let oracle = OracleSummary {
            exact_means,
            exact_variances,
            max_abs_mean_error,
            tolerance: section.tolerance,
            passed: max_abs_mean_error <= section.tolerance,
        };
        let summary = filter_summary("oracle-check", &trace, self.observation_count(), config, Some(oracle.clone()), runtime);
        write_filter_outputs(config, &trace, &summary)?;
        let mut lines = filter_report(&summary, &config.output_dir);
        lines.push(format!(
            "max |filter mean - conjugate mean| over t=1..{}: {:.6} (tolerance {})",
            trace.records.len(),
            max_abs_mean_error,
            section.tolerance
        ));
        if !oracle.passed {
            return Err(Error::ToleranceExceeded {
                what: "oracle-check posterior mean".into(),
                value: max_abs_mean_error,
                tolerance: section.tolerance,
            });
        }
        Ok(lines)
    }

    fn mcmc(&self, config: &RunConfig) -> Result<Vec<String>> {
        let section = config
            .mcmc
            .as_ref()
            .ok_or_else(|| Error::Config("mcmc-ref needs an 'mcmc' section".into()))?;
        let streams = Streams::new(config.filter.seed);
        let start = Instant::now();
        let run = with_problem!(self, |model, batches| {
            let all: Vec<_> = batches.iter().flatten().cloned().collect();
            let initial = match &section.initial {
                Some(x) => x.clone(),
                None => model.sample_prior(&mut streams.stream(Purpose::Mcmc, 0, 1))?,
            };
            let kernel = RwmKernel::isotropic(|x: &[f64]| model.log_posterior(x, &all), section.proposal_std, model.dim())?;
            kernel.mcmc_reference_run(&initial, section.samples, section.burn_in, &mut streams.stream(Purpose::Mcmc, 0, 0))?
        });
        let runtime = start.elapsed().as_secs_f64();
        let approx = ParticleApproximation::uniform(run.dim, run.samples.clone())?;
        let dir = &config.output_dir;
        io::write_file(&dir.join("particles_final.csv"), |w| io::write_particles(w, &approx))?;
        write_density_outputs(config, &approx)?;

        #[derive(Serialize)]
        struct McmcSummary {
            command: &'static str,
            seed: u64,
            samples: usize,
            burn_in: usize,
            retained: usize,
            acceptance_rate: f64,
            posterior_mean: Vec<f64>,
            posterior_variance: Vec<f64>,
            runtime_seconds: f64,
        }
        let summary = McmcSummary {
            command: "mcmc-ref",
            seed: config.filter.seed,
            samples: section.samples,
            burn_in: section.burn_in,
            retained: run.len(),
            acceptance_rate: run.acceptance_rate(),
            posterior_mean: approx.weighted_mean(),
            posterior_variance: approx.weighted_variance(),
            runtime_seconds: runtime,
        };
        write_json(&dir.join("summary.json"), &summary)?;
        Ok(vec![
            format!("mcmc-ref: {} retained samples, acceptance rate {:.3}", run.len(), run.acceptance_rate()),
            format!("posterior mean {:?}, variance {:?}", summary.posterior_mean, summary.posterior_variance),
            format!("outputs written to {}", dir.display()),
        ])
    }

    fn convergence(&self, config: &RunConfig) -> Result<Vec<String>> {
        let section = config
            .convergence
            .as_ref()
            .ok_or_else(|| Error::Config("convergence needs a 'convergence' section".into()))?;
        let start = Instant::now();
        let mut tables: Vec<ConvergenceTable> = Vec::new();
        for name in &section.algorithms {
            let cfg = config.filter_config(name.parse()?)?;
            let table = with_problem!(self, |model, batches| convergence_study(
                model,
                batches,
                &section.particles,
                section.repetitions,
                &cfg
            )?);
            tables.push(table);
        }
        let runtime = start.elapsed().as_secs_f64();
        let dir = &config.output_dir;
        io::write_file(&dir.join("convergence.csv"), |w| io::write_convergence(w, &tables))?;

        #[derive(Serialize)]
        struct Slope {
            algorithm: String,
            log_log_slope: Option<f64>,
        }
        #[derive(Serialize)]
        struct ConvergenceSummary {
            command: &'static str,
            seed: u64,
            repetitions: usize,
            particles: Vec<usize>,
            slopes: Vec<Slope>,
            runtime_seconds: f64,
        }
        let summary = ConvergenceSummary {
            command: "convergence",
            seed: config.filter.seed,
            repetitions: section.repetitions,
            particles: section.particles.clone(),
            slopes: tables
                .iter()
                .map(|t| Slope {
                    algorithm: t.algorithm.to_string(),
                    log_log_slope: t.slope,
                })
                .collect(),
            runtime_seconds: runtime,
        };
        write_json(&dir.join("summary.json"), &summary)?;
        let mut lines: Vec<String> = tables
            .iter()
            .map(|t| match t.slope {
                Some(s) => format!("{}: log-log slope of variance vs M = {s:.3}", t.algorithm),
                None => format!("{}: variance vanished, no slope", t.algorithm),
            })
            .collect();
        lines.push(format!("outputs written to {}", dir.display()));
        Ok(lines)
    }
}

fn calibrate(config: &RunConfig) -> Result<Vec<String>> {
    let pendulum = config.pendulum()?;
    let section = config
        .calibration
        .as_ref()
        .ok_or_else(|| Error::Config("calibrate-noise needs a 'calibration' section".into()))?;
    let schedule = match section.schedule {
        Schedule::ZeroCrossings => {
            let count = section
                .crossings
                .ok_or_else(|| Error::Config("calibration.crossings is required for zero_crossings".into()))?;
            zero_crossing_times(section.g_nominal, count, &pendulum)?
        }
        Schedule::Measurements => {
            let data = config.data.as_ref().ok_or_else(|| Error::Config("missing data file".into()))?;
            io::parse_measurements(data)?.times()
        }
    };
    let start = Instant::now();
    let mut rng = Streams::new(config.filter.seed).stream(Purpose::Calibration, 0, 0);
    let sigma2 = calibrate_noise_variance(
        &pendulum,
        section.g_nominal,
        &schedule,
        section.time_noise(),
        section.replicates,
        &mut rng,
    )?;
    let runtime = start.elapsed().as_secs_f64();

    #[derive(Serialize)]
    struct CalibrationSummary {
        command: &'static str,
        seed: u64,
        g_nominal: f64,
        time_noise_mean: f64,
        time_noise_variance: f64,
        replicates: usize,
        schedule: Vec<f64>,
        noise_variance: f64,
        runtime_seconds: f64,
    }
    let dir = &config.output_dir;
    write_json(
        &dir.join("summary.json"),
        &CalibrationSummary {
            command: "calibrate-noise",
            seed: config.filter.seed,
            g_nominal: section.g_nominal,
            time_noise_mean: section.time_noise_mean,
            time_noise_variance: section.time_noise_variance,
            replicates: section.replicates,
            schedule,
            noise_variance: sigma2,
            runtime_seconds: runtime,
        },
    )?;
    Ok(vec![
        format!("estimated angle noise variance: {sigma2:.6}"),
        format!("outputs written to {}", dir.display()),
    ])
}

fn filter_summary<'a>(
    command: &'a str,
    trace: &FilterTrace,
    observations: usize,
    config: &RunConfig,
    oracle: Option<OracleSummary>,
    runtime: f64,
) -> FilterSummary<'a> {
    FilterSummary {
        command,
        algorithm: trace.config.algorithm.to_string(),
        seed: trace.config.seed,
        particles: trace.config.particle_count,
        observations,
        steps: trace
            .records
            .iter()
            .map(|r| StepSummary {
                t: r.t,
                ess: r.ess,
                resampled: r.resampled,
                log_evidence_increment: r.log_evidence_increment,
                posterior_mean: r.posterior_mean.clone(),
                posterior_variance: r.posterior_variance.clone(),
                acceptance_rate: r.acceptance_rate,
            })
            .collect(),
        cumulative_log_evidence: trace.cumulative_log_evidence(),
        resample_count: trace.resample_count(),
        resample_steps: trace.resample_steps(),
        final_mean: trace.final_approx.weighted_mean(),
        final_variance: trace.final_approx.weighted_variance(),
        g_true: config.g_true.as_ref().map(|g| g.value()),
        oracle,
        runtime_seconds: runtime,
    }
}

fn filter_report(summary: &FilterSummary, dir: &Path) -> Vec<String> {
    let mut lines = vec![format!(
        "{} with {} particles (seed {}): {} steps, {} resampling steps",
        summary.algorithm,
        summary.particles,
        summary.seed,
        summary.steps.len(),
        summary.resample_count
    )];
    for s in &summary.steps {
        lines.push(format!(
            "  t={:>3}  ess={:>10.2}  resampled={:<5}  mean={:.5}  var={:.5}",
            s.t, s.ess, s.resampled, s.posterior_mean[0], s.posterior_variance[0]
        ));
    }
    lines.push(format!("cumulative log-evidence: {:.6}", summary.cumulative_log_evidence));
    lines.push(format!("outputs written to {}", dir.display()));
    lines
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    io::write_file(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        std::io::Write::write_all(w, b"\n").map_err(|e| Error::io(path, e))
    })
}

fn write_filter_outputs(config: &RunConfig, trace: &FilterTrace, summary: &FilterSummary) -> Result<()> {
    let dir = &config.output_dir;
    write_json(&dir.join("summary.json"), summary)?;
    io::write_file(&dir.join("trace.csv"), |w| io::write_trace(w, trace))?;
    io::write_file(&dir.join("particles_final.csv"), |w| io::write_particles(w, &trace.final_approx))?;
    write_density_outputs(config, &trace.final_approx)
}

/// kde.csv and, with a reference value, deviation.csv for 1-D posteriors.
fn write_density_outputs(config: &RunConfig, approx: &ParticleApproximation) -> Result<()> {
    if approx.dim() != 1 {
        return Ok(());
    }
    let dir = &config.output_dir;
    let (points, bandwidth, range) = match &config.kde {
        Some(k) => (k.points, k.bandwidth, k.range),
        None => (512, None, None),
    };
    let h = match bandwidth {
        Some(h) => Some(h),
        None => match silverman_bandwidth(approx) {
            Ok(h) => Some(h),
            // Collapsed posterior: no density to draw.
            Err(Error::DegenerateSample) => None,
            Err(e) => return Err(e),
        },
    };
    if let Some(h) = h {
        let [lo, hi] = range.unwrap_or_else(|| {
            let xs = approx.flat_positions();
            let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            [lo - 5.0 * h, hi + 5.0 * h]
        });
        let est = kde(approx, &kde_grid(lo, hi, points), Some(h))?;
        io::write_file(&dir.join("kde.csv"), |w| io::write_kde(w, &est))?;
    }
    if let Some(g) = &config.g_true {
        let epsilons = match &config.deviation {
            Some(d) => d.epsilons.clone(),
            None => (0..=100).map(|i| i as f64 / 100.0).collect(),
        };
        let probs = diagnostics::deviation_probability_curve(approx, g.value(), &epsilons);
        io::write_file(&dir.join("deviation.csv"), |w| io::write_deviation(w, &epsilons, &probs))?;
    }
    Ok(())
}
