//! JSON run configuration.
//!
//! Physical constants have no defaults: the pendulum, prior and noise
//! sections must spell out every value. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::filters::{Algorithm, FilterConfig};
use crate::models::{reference_gravity, GaussianNoise, PendulumConfig, TimeNoise, TruncatedNormalPrior};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub prior: Option<PriorSection>,
    pub noise: Option<NoiseSection>,
    pub filter: FilterSection,
    pub output_dir: PathBuf,
    /// Measurement CSV, relative to the configuration file.
    pub data: Option<PathBuf>,
    /// Further measurement files appended after `data` (batch ingestion).
    #[serde(default)]
    pub extra_data: Vec<PathBuf>,
    pub g_true: Option<TrueValue>,
    pub kde: Option<KdeSection>,
    pub deviation: Option<DeviationSection>,
    pub mcmc: Option<McmcSection>,
    pub convergence: Option<ConvergenceSection>,
    pub calibration: Option<CalibrationSection>,
    pub oracle: Option<OracleSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSection {
    Pendulum {
        length: f64,
        initial_angle: f64,
        initial_velocity: f64,
        rk4_step: f64,
    },
    /// Conjugate Gaussian-mean oracle with synthetic observations.
    GaussianMean { true_mean: f64, observations: usize },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSection {
    pub mean: f64,
    pub std: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub variance: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSection {
    pub particles: usize,
    pub threshold_fraction: f64,
    pub mcmc_moves: usize,
    pub proposal_std: f64,
    pub seed: u64,
    #[serde(default)]
    pub move_only_after_resample: bool,
}

/// Reference parameter value, given directly or as a location.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum TrueValue {
    Value(f64),
    Location { latitude: f64, altitude: f64 },
}

impl TrueValue {
    pub fn value(&self) -> f64 {
        match *self {
            TrueValue::Value(v) => v,
            TrueValue::Location { latitude, altitude } => reference_gravity(latitude, altitude),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KdeSection {
    pub points: usize,
    pub bandwidth: Option<f64>,
    /// Grid bounds; defaults to the sample range padded by five bandwidths.
    pub range: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviationSection {
    pub epsilons: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McmcSection {
    pub samples: usize,
    pub burn_in: usize,
    pub proposal_std: f64,
    /// Starting point; a prior draw when absent.
    pub initial: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceSection {
    pub particles: Vec<usize>,
    pub repetitions: usize,
    pub algorithms: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    /// Zero crossings of the nominal trajectory.
    ZeroCrossings,
    /// The measured times from the data files.
    Measurements,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSection {
    pub g_nominal: f64,
    pub time_noise_mean: f64,
    pub time_noise_variance: f64,
    pub replicates: usize,
    pub schedule: Schedule,
    /// Number of zero crossings for the `zero_crossings` schedule.
    pub crossings: Option<usize>,
}

impl CalibrationSection {
    pub fn time_noise(&self) -> TimeNoise {
        TimeNoise {
            mean: self.time_noise_mean,
            variance: self.time_noise_variance,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    pub algorithm: String,
    /// Largest acceptable |filter mean - exact mean| over all steps.
    pub tolerance: f64,
}

impl RunConfig {
    /// Parses and validates a configuration; relative data paths are resolved
    /// against the directory of `path`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config: RunConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        if let Some(data) = &config.data {
            config.data = Some(base.join(data));
        }
        config.extra_data = config.extra_data.iter().map(|p| base.join(p)).collect();
        config.validate()?;
        Ok(config)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        match &self.model {
            ModelSection::Pendulum { .. } => {
                self.pendulum()?;
                self.prior_dist()?;
                self.noise_model()?;
                let data = self
                    .data
                    .as_ref()
                    .ok_or_else(|| Error::Config("the pendulum model needs a 'data' file".into()))?;
                for p in std::iter::once(data).chain(&self.extra_data) {
                    if !p.exists() {
                        return Err(Error::Config(format!("data file {} does not exist", p.display())));
                    }
                }
            }
            ModelSection::GaussianMean { true_mean, observations } => {
                if !true_mean.is_finite() || *observations == 0 {
                    return Err(Error::Config(
                        "gaussian_mean needs a finite true_mean and at least one observation".into(),
                    ));
                }
                if self.data.is_some() || !self.extra_data.is_empty() {
                    return Err(Error::Config("gaussian_mean generates its own data".into()));
                }
            }
        }
        self.filter_config(Algorithm::Smc)?.validate()?;
        if let Some(k) = &self.kde {
            if k.points < 2 {
                return Err(Error::Config("kde.points must be at least 2".into()));
            }
        }
        if let Some(d) = &self.deviation {
            if d.epsilons.windows(2).any(|w| w[0] > w[1]) || d.epsilons.iter().any(|e| !(0.0..=1.0).contains(e)) {
                return Err(Error::Config("deviation.epsilons must be sorted values in [0, 1]".into()));
            }
        }
        if let Some(o) = &self.oracle {
            o.algorithm.parse::<Algorithm>()?;
            if !(o.tolerance > 0.0) {
                return Err(Error::Config("oracle.tolerance must be positive".into()));
            }
        }
        if let Some(c) = &self.convergence {
            for a in &c.algorithms {
                a.parse::<Algorithm>()?;
            }
            if c.particles.iter().any(|m| *m < 2) {
                return Err(Error::Config("convergence.particles entries must be at least 2".into()));
            }
        }
        Ok(())
    }

    pub fn pendulum(&self) -> Result<PendulumConfig> {
        match self.model {
            ModelSection::Pendulum {
                length,
                initial_angle,
                initial_velocity,
                rk4_step,
            } => PendulumConfig::new(length, initial_angle, initial_velocity, rk4_step),
            ModelSection::GaussianMean { .. } => Err(Error::Config("this command needs the pendulum model".into())),
        }
    }

    pub fn prior_dist(&self) -> Result<TruncatedNormalPrior> {
        let p = self
            .prior
            .as_ref()
            .ok_or_else(|| Error::Config("missing 'prior' section".into()))?;
        TruncatedNormalPrior::new(p.mean, p.std, p.lower, p.upper)
    }

    pub fn noise_model(&self) -> Result<GaussianNoise> {
        let n = self
            .noise
            .as_ref()
            .ok_or_else(|| Error::Config("missing 'noise' section".into()))?;
        GaussianNoise::new(n.variance)
    }

    pub fn filter_config(&self, algorithm: Algorithm) -> Result<FilterConfig> {
        let f = &self.filter;
        Ok(FilterConfig {
            particle_count: f.particles,
            algorithm,
            threshold_fraction: f.threshold_fraction,
            mcmc_moves: f.mcmc_moves,
            proposal_std: f.proposal_std,
            seed: f.seed,
            move_only_after_resample: f.move_only_after_resample,
            retain_steps: false,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const ORACLE: &str = r#"{
        "model": {"type": "gaussian_mean", "true_mean": 0.5, "observations": 10},
        "filter": {"particles": 100, "threshold_fraction": 0.75, "mcmc_moves": 5, "proposal_std": 0.25, "seed": 1},
        "output_dir": "out",
        "oracle": {"algorithm": "smc", "tolerance": 0.05}
    }"#;

    #[test]
    fn parses_oracle_config() {
        let c = RunConfig::from_json(ORACLE).unwrap();
        assert!(matches!(c.model, ModelSection::GaussianMean { observations: 10, .. }));
        assert_eq!(c.filter_config(Algorithm::Smc).unwrap().threshold(), 75.0);
    }

    #[test]
    fn rejects_unknown_keys() {
        let bad = ORACLE.replace("\"seed\": 1", "\"seed\": 1, \"colour\": 3");
        assert!(RunConfig::from_json(&bad).is_err());
    }

    #[test]
    fn pendulum_constants_are_mandatory() {
        let text = r#"{
            "model": {"type": "pendulum", "length": 7.4, "initial_angle": 0.08, "rk4_step": 0.001},
            "filter": {"particles": 100, "threshold_fraction": 0.75, "mcmc_moves": 5, "proposal_std": 0.25, "seed": 1},
            "output_dir": "out"
        }"#;
        let err = RunConfig::from_json(text).unwrap_err().to_string();
        assert!(err.contains("initial_velocity"), "{err}");
    }

    #[test]
    fn true_value_forms() {
        let v: TrueValue = serde_json::from_str("9.81").unwrap();
        assert_eq!(v.value(), 9.81);
        let v: TrueValue = serde_json::from_str(r#"{"latitude": 0, "altitude": 0}"#).unwrap();
        assert_eq!(v.value(), 9.780327);
    }
}
