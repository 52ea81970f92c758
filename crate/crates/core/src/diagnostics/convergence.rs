use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::filters::{run_filter, Algorithm, FilterConfig};
use crate::models::ForwardModel;
use crate::rng::Streams;

/// Spread of the final posterior-mean estimate across independent runs.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub particles: usize,
    /// Average of the per-run posterior means.
    pub mean: f64,
    /// Sample variance of the per-run posterior means.
    pub variance: f64,
}

impl ConvergenceRow {
    pub fn std(&self) -> f64 {
        self.variance.sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    pub algorithm: Algorithm,
    pub rows: Vec<ConvergenceRow>,
    /// Least-squares slope of `ln(variance)` against `ln(M)`; `None` when
    /// some variance is zero.
    pub slope: Option<f64>,
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 || xs.iter().chain(ys).any(|v| !(*v > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Runs the filter `repetitions` times for every particle count and reports
/// the mean and variance of the first coordinate of the final posterior mean.
/// Run seeds derive from `template.seed`, the particle count and the
/// repetition index.
pub fn convergence_study<M>(
    model: &M,
    batches: &[Vec<M::Observation>],
    particle_counts: &[usize],
    repetitions: usize,
    template: &FilterConfig,
) -> Result<ConvergenceTable>
where
    M: ForwardModel,
    M::Observation: Clone,
{
    if repetitions < 2 {
        return Err(Error::Config(format!("need at least 2 repetitions, got {repetitions}")));
    }
    let root = Streams::new(template.seed);
    let mut rows = Vec::with_capacity(particle_counts.len());
    for &m in particle_counts {
        let estimates = (0..repetitions as u64)
            .into_par_iter()
            .map(|rep| {
                let config = FilterConfig {
                    particle_count: m,
                    seed: root.derive(m as u64, rep).seed(),
                    retain_steps: false,
                    ..template.clone()
                };
                Ok(run_filter(model, batches, &config)?.final_mean()[0])
            })
            .collect::<Result<Vec<f64>>>()?;
        let n = estimates.len() as f64;
        let mean = estimates.iter().sum::<f64>() / n;
        let variance = estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0);
        rows.push(ConvergenceRow {
            particles: m,
            mean,
            variance,
        });
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.particles as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.variance).collect();
    Ok(ConvergenceTable {
        algorithm: template.algorithm,
        slope: log_log_slope(&xs, &ys),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::GaussianMeanModel;
    use crate::filters::singleton_batches;
    use crate::rng::Purpose;

    /// Point-mass prior with a flat likelihood.
    struct Fixed;

    impl ForwardModel for Fixed {
        type Observation = f64;
        fn dim(&self) -> usize {
            1
        }
        fn sample_prior<R: rand::Rng + ?Sized>(&self, _: &mut R) -> Result<Vec<f64>> {
            Ok(vec![3.0])
        }
        fn prior_log_density(&self, x: &[f64]) -> f64 {
            if x[0] == 3.0 { 0.0 } else { f64::NEG_INFINITY }
        }
        fn log_likelihood(&self, _: &[f64], _: &[f64]) -> Result<f64> {
            Ok(0.0)
        }
    }

    #[test]
    fn slope_of_power_law() {
        let xs = [16.0, 32.0, 64.0];
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 / x).collect();
        assert!((log_log_slope(&xs, &ys).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(log_log_slope(&xs, &[1.0, 0.0, 1.0]), None);
    }

    #[test]
    fn point_mass_has_no_spread() {
        let table = convergence_study(&Fixed, &[vec![0.0]], &[4, 8], 3, &FilterConfig::smc(4, 1)).unwrap();
        assert!(table.rows.iter().all(|r| r.variance == 0.0 && r.mean == 3.0));
        assert_eq!(table.slope, None);
    }

    #[test]
    fn gaussian_mean_sis_rate() {
        let model = GaussianMeanModel::new(0.5);
        let mut rng = Streams::new(99).stream(Purpose::Synthetic, 0, 0);
        let ys = model.simulate(10, &mut rng);
        let counts: Vec<usize> = (4..=10).map(|k| 1 << k).collect();
        let table = convergence_study(&model, &singleton_batches(&ys), &counts, 50, &FilterConfig::sis(16, 5)).unwrap();
        let slope = table.slope.unwrap();
        assert!((slope + 1.0).abs() <= 0.2, "slope {slope}");
        // Deterministic given seeds.
        let again = convergence_study(&model, &singleton_batches(&ys), &counts[..2], 5, &FilterConfig::sis(16, 5)).unwrap();
        let twice = convergence_study(&model, &singleton_batches(&ys), &counts[..2], 5, &FilterConfig::sis(16, 5)).unwrap();
        assert_eq!(again, twice);
    }
}
