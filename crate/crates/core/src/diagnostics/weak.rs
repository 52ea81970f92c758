use crate::error::{Error, Result};
use crate::particle::ParticleApproximation;

/// Bounded Lipschitz test function `x -> tanh(alpha (x[coordinate] - center))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TanhTest {
    pub coordinate: usize,
    pub center: f64,
    pub alpha: f64,
}

impl TanhTest {
    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.alpha * (x[self.coordinate] - self.center)).tanh()
    }
}

const SCALES: [f64; 4] = [0.5, 1.0, 2.0, 4.0];
const CENTERS: usize = 41;

/// Tanh tests with centers spread over the joint support of `a` and `b` and
/// scales 0.5, 1, 2 and 4, for every coordinate. Symmetric in `a` and `b`.
pub fn default_test_family(a: &ParticleApproximation, b: &ParticleApproximation) -> Vec<TanhTest> {
    let mut family = Vec::new();
    for coordinate in 0..a.dim().min(b.dim()) {
        let (lo, hi) = a
            .positions()
            .chain(b.positions())
            .map(|x| x[coordinate])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        let n = if hi > lo { CENTERS } else { 1 };
        for i in 0..n {
            let center = if n == 1 { lo } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 };
            for alpha in SCALES {
                family.push(TanhTest {
                    coordinate,
                    center,
                    alpha,
                });
            }
        }
    }
    family
}

/// `max_f |a(f) - b(f)|` over a finite family of test functions.
pub fn weak_distance<F>(a: &ParticleApproximation, b: &ParticleApproximation, family: &[F]) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
{
    if a.dim() != b.dim() {
        return Err(Error::Config(format!(
            "cannot compare dimensions {} and {}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(sup_difference(&test_integrals(a, family)?, &test_integrals(b, family)?))
}

/// `a(f)` for every `f` in `family`. With [`sup_difference`] this lets one
/// large reference be compared with many approximations.
pub fn test_integrals<F>(a: &ParticleApproximation, family: &[F]) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    family.iter().map(|f| a.integrate(f)).collect()
}

/// `max_k |a_k - b_k|`.
pub fn sup_difference(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |worst, (x, y)| worst.max((x - y).abs()))
}

/// [`weak_distance`] over [`default_test_family`].
pub fn weak_distance_default(a: &ParticleApproximation, b: &ParticleApproximation) -> Result<f64> {
    let family: Vec<_> = default_test_family(a, b)
        .into_iter()
        .map(|t| move |x: &[f64]| t.eval(x))
        .collect();
    weak_distance(a, b, &family)
}

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn ks_distance(x: &[f64], y: &[f64]) -> f64 {
    let mut x = x.to_vec();
    let mut y = y.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (nx, ny) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0f64;
    while i < x.len() && j < y.len() {
        let v = x[i].min(y[j]);
        while i < x.len() && x[i] <= v {
            i += 1;
        }
        while j < y.len() && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / nx - j as f64 / ny).abs());
    }
    d
}
