use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

const MAX_REJECTIONS: usize = 1_000_000;

/// Normal distribution restricted to `[lower, upper]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedNormalPrior {
    pub mean: f64,
    pub std: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Default for TruncatedNormalPrior {
    /// `N(10, 1)` on `[0, 20]`, the gravity prior.
    fn default() -> Self {
        Self {
            mean: 10.0,
            std: 1.0,
            lower: 0.0,
            upper: 20.0,
        }
    }
}

impl TruncatedNormalPrior {
    pub fn new(mean: f64, std: f64, lower: f64, upper: f64) -> Result<Self> {
        let prior = Self {
            mean,
            std,
            lower,
            upper,
        };
        prior.validate()?;
        Ok(prior)
    }

    pub fn validate(&self) -> Result<()> {
        if ![self.mean, self.std, self.lower, self.upper]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(Error::Config("prior parameters must be finite".into()));
        }
        if self.std <= 0.0 {
            return Err(Error::Config(format!("prior std must be positive, got {}", self.std)));
        }
        if self.lower >= self.upper {
            return Err(Error::Config(format!(
                "prior support [{}, {}] is empty",
                self.lower, self.upper
            )));
        }
        Ok(())
    }

    /// Rejection sampling from the untruncated normal.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        let normal = Normal::new(self.mean, self.std)
            .map_err(|e| Error::Config(format!("prior: {e}")))?;
        for _ in 0..MAX_REJECTIONS {
            let g = normal.sample(rng);
            if (self.lower..=self.upper).contains(&g) {
                return Ok(g);
            }
        }
        Err(Error::Config(format!(
            "{MAX_REJECTIONS} consecutive prior draws fell outside [{}, {}]",
            self.lower, self.upper
        )))
    }

    /// Unnormalized log-density: `-(g - mean)^2 / (2 std^2)` on the support.
    pub fn log_density(&self, g: f64) -> f64 {
        if (self.lower..=self.upper).contains(&g) {
            let z = (g - self.mean) / self.std;
            -0.5 * z * z
        } else {
            f64::NEG_INFINITY
        }
    }
}

/// Additive centred Gaussian observation noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianNoise {
    pub variance: f64,
}

impl Default for GaussianNoise {
    fn default() -> Self {
        Self { variance: 0.0025 }
    }
}

impl GaussianNoise {
    pub fn new(variance: f64) -> Result<Self> {
        if !(variance.is_finite() && variance > 0.0) {
            return Err(Error::Config(format!(
                "noise variance must be positive, got {variance}"
            )));
        }
        Ok(Self { variance })
    }
}

/// Unnormalized Gaussian log-likelihood `-(y - prediction)^2 / (2 sigma^2)`.
pub fn gaussian_log_likelihood(y: f64, prediction: f64, noise: &GaussianNoise) -> f64 {
    let r = y - prediction;
    -r * r / (2.0 * noise.variance)
}
