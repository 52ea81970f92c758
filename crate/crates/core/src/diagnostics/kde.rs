use crate::error::{Error, Result};
use crate::particle::ParticleApproximation;

/// Gaussian kernel density estimate on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct KdeEstimate {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
}

impl KdeEstimate {
    /// Trapezoidal integral of the density over the grid.
    pub fn integral(&self) -> f64 {
        self.grid
            .windows(2)
            .zip(self.density.windows(2))
            .map(|(x, d)| 0.5 * (x[1] - x[0]) * (d[0] + d[1]))
            .sum()
    }

    /// Density at `x` by linear interpolation; zero outside the grid.
    pub fn interpolate(&self, x: f64) -> f64 {
        let i = self.grid.partition_point(|&g| g < x);
        if i == 0 {
            return if self.grid.first() == Some(&x) { self.density[0] } else { 0.0 };
        }
        if i == self.grid.len() {
            return 0.0;
        }
        let (x0, x1) = (self.grid[i - 1], self.grid[i]);
        let s = (x - x0) / (x1 - x0);
        self.density[i - 1] * (1.0 - s) + self.density[i] * s
    }
}

/// Silverman's rule `1.06 sigma M_eff^(-1/5)` with the weighted standard
/// deviation and the effective sample size.
pub fn silverman_bandwidth(approx: &ParticleApproximation) -> Result<f64> {
    let sd = approx.weighted_variance()[0].sqrt();
    if !(sd > 0.0) {
        return Err(Error::DegenerateSample);
    }
    Ok(1.06 * sd * approx.effective_sample_size().powf(-0.2))
}

/// `n` equally spaced points from `lo` to `hi`.
pub fn kde_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let n = n.max(2);
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Weighted Gaussian KDE `sum_i W_i phi_h(x - X_i)` of a one-dimensional
/// approximation. Uses Silverman's bandwidth when `bandwidth` is `None`.
pub fn kde(approx: &ParticleApproximation, grid: &[f64], bandwidth: Option<f64>) -> Result<KdeEstimate> {
    if approx.dim() != 1 {
        return Err(Error::Unsupported("density estimates need one-dimensional particles".into()));
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Config("KDE grid must be strictly increasing".into()));
    }
    let h = match bandwidth {
        Some(h) if h.is_finite() && h > 0.0 => h,
        Some(h) => return Err(Error::Config(format!("bandwidth must be positive, got {h}"))),
        None => silverman_bandwidth(approx)?,
    };
    let norm = 1.0 / (h * (2.0 * std::f64::consts::PI).sqrt());
    let weights = approx.weights();
    let xs = approx.flat_positions();
    let density = grid
        .iter()
        .map(|g| {
            xs.iter()
                .zip(&weights)
                .filter(|(_, w)| **w > 0.0)
                .map(|(x, w)| {
                    let z = (g - x) / h;
                    w * (-0.5 * z * z).exp()
                })
                .sum::<f64>()
                * norm
        })
        .collect();
    Ok(KdeEstimate {
        grid: grid.to_vec(),
        density,
        bandwidth: h,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamRng;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn std_normal_pdf(x: f64) -> f64 {
        (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
    }

    #[test]
    fn single_particle_gives_kernel() {
        let a = ParticleApproximation::from_samples(&[5.0]).unwrap();
        let grid = kde_grid(0.0, 10.0, 101);
        let est = kde(&a, &grid, Some(1.0)).unwrap();
        for (x, d) in est.grid.iter().zip(&est.density) {
            assert!((d - std_normal_pdf(x - 5.0)).abs() < 1e-15);
        }
        assert!(matches!(kde(&a, &grid, None), Err(Error::DegenerateSample)));
    }

    #[test]
    fn integrates_to_one() {
        let a = ParticleApproximation::from_weights(1, vec![1.0, 2.0, 4.5], &[0.2, 0.5, 0.3]).unwrap();
        let h = silverman_bandwidth(&a).unwrap();
        let est = kde(&a, &kde_grid(1.0 - 5.0 * h, 4.5 + 5.0 * h, 2001), None).unwrap();
        let total = est.integral();
        assert!((0.98..=1.0 + 1e-9).contains(&total), "{total}");
        assert!(est.density.iter().all(|d| *d >= 0.0));
    }

    #[test]
    fn consistent_for_normal_samples() {
        let mut rng = StreamRng::seed_from_u64(12);
        let xs: Vec<f64> = (0..100_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let a = ParticleApproximation::from_samples(&xs).unwrap();
        let est = kde(&a, &kde_grid(-4.0, 4.0, 161), None).unwrap();
        let worst = est
            .grid
            .iter()
            .zip(&est.density)
            .map(|(x, d)| (d - std_normal_pdf(*x)).abs())
            .fold(0.0, f64::max);
        assert!(worst < 0.02, "{worst}");
    }

    #[test]
    fn rejects_bad_grid() {
        let a = ParticleApproximation::from_samples(&[1.0, 2.0]).unwrap();
        assert!(kde(&a, &[0.0, 0.0, 1.0], None).is_err());
    }

    #[test]
    fn interpolation() {
        let est = KdeEstimate {
            grid: vec![0.0, 1.0, 2.0],
            density: vec![0.0, 1.0, 0.5],
            bandwidth: 1.0,
        };
        assert_eq!(est.interpolate(0.5), 0.5);
        assert_eq!(est.interpolate(1.5), 0.75);
        assert_eq!(est.interpolate(-1.0), 0.0);
        assert_eq!(est.interpolate(0.0), 0.0);
        assert_eq!(est.interpolate(3.0), 0.0);
    }
}
