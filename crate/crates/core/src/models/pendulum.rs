//! The frictionless planar pendulum `x'' = -(g / l) sin x` as a forward model
//! for the gravitational acceleration `g`.
//!
//! Trajectories are integrated with classical fixed-step RK4 from `tau = 0`.
//! A time that is not a multiple of the step is reached by one shortened final
//! step from the last grid point, so every evaluation path (single time,
//! several times in one sweep, stored grid) produces bit-identical angles.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{gaussian_log_likelihood, ForwardModel, GaussianNoise, TruncatedNormalPrior};
use crate::error::{Error, Result};

/// Physical and numerical constants of the pendulum initial value problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PendulumConfig {
    /// String length in meters.
    pub length: f64,
    /// Initial angle in radians.
    pub initial_angle: f64,
    /// Initial angular velocity in radians per second.
    pub initial_velocity: f64,
    /// RK4 step in seconds.
    pub rk4_step: f64,
}

impl PendulumConfig {
    pub fn new(length: f64, initial_angle: f64, initial_velocity: f64, rk4_step: f64) -> Result<Self> {
        let config = Self {
            length,
            initial_angle,
            initial_velocity,
            rk4_step,
        };
        config.validate()?;
        Ok(config)
    }

    /// The Garching experiment: 7.4 m string released at rest from 5 degrees.
    pub fn garching() -> Self {
        Self {
            length: 7.4,
            initial_angle: std::f64::consts::PI / 36.0,
            initial_velocity: 0.0,
            rk4_step: 1e-3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length.is_finite() && self.length > 0.0) {
            return Err(Error::Config(format!("pendulum length must be positive, got {}", self.length)));
        }
        if !(self.rk4_step.is_finite() && self.rk4_step > 0.0) {
            return Err(Error::Config(format!("rk4_step must be positive, got {}", self.rk4_step)));
        }
        if !(self.initial_angle.is_finite() && self.initial_angle.abs() < std::f64::consts::PI) {
            return Err(Error::Config(format!(
                "initial angle must lie in (-pi, pi), got {}",
                self.initial_angle
            )));
        }
        if !self.initial_velocity.is_finite() {
            return Err(Error::Config("initial velocity must be finite".into()));
        }
        Ok(())
    }
}

/// Normal gravity at latitude `latitude` (degrees) and altitude `altitude` (meters).
pub fn reference_gravity(latitude: f64, altitude: f64) -> f64 {
    let phi = latitude.to_radians();
    let s1 = phi.sin();
    let s2 = (2.0 * phi).sin();
    9.780327 * (1.0 + 5.3024e-3 * s1 * s1 - 5.8e-6 * s2 * s2) - 1.965e-6 * altitude
}

type State = (f64, f64);

/// Below this magnitude [`sin`] uses its Taylor polynomial, whose
/// truncation error is under half an ulp there.
const SMALL_ANGLE: f64 = 0.125;

#[inline(always)]
fn sin_poly(x: f64) -> f64 {
    const C3: f64 = -1.0 / 6.0;
    const C5: f64 = 1.0 / 120.0;
    const C7: f64 = -1.0 / 5040.0;
    const C9: f64 = 1.0 / 362880.0;
    const C11: f64 = -1.0 / 39916800.0;
    let x2 = x * x;
    x + x * x2 * (C3 + x2 * (C5 + x2 * (C7 + x2 * (C9 + x2 * C11))))
}

#[inline(always)]
fn sin(x: f64) -> f64 {
    if x.abs() < SMALL_ANGLE {
        sin_poly(x)
    } else {
        x.sin()
    }
}

#[inline]
fn rk4(state: State, k: f64, h: f64) -> State {
    let (x, v) = state;
    let (a1, b1) = (v, -k * sin(x));
    let (x2, v2) = (x + 0.5 * h * a1, v + 0.5 * h * b1);
    let (a2, b2) = (v2, -k * sin(x2));
    let (x3, v3) = (x + 0.5 * h * a2, v + 0.5 * h * b2);
    let (a3, b3) = (v3, -k * sin(x3));
    let (x4, v4) = (x + h * a3, v + h * b3);
    let (a4, b4) = (v4, -k * sin(x4));
    (
        x + h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4),
        v + h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4),
    )
}

/// Number of full steps before `tau` and the length of the final partial step.
fn split_time(tau: f64, h: f64) -> (u64, f64) {
    let mut n = (tau / h).floor();
    if tau - n * h < 0.0 {
        n -= 1.0;
    }
    (n as u64, tau - n * h)
}

fn check_inputs(g: f64, tau: f64) -> Result<()> {
    if !(g.is_finite() && g >= 0.0) {
        return Err(Error::Config(format!("gravity must be non-negative, got {g}")));
    }
    if !(tau.is_finite() && tau >= 0.0) {
        return Err(Error::Config(format!("time must be non-negative, got {tau}")));
    }
    Ok(())
}

/// Marches full steps from `state` at step `from` to step `to`.
fn march(mut state: State, from: u64, to: u64, k: f64, h: f64) -> Result<State> {
    for n in from..to {
        state = rk4(state, k, h);
        if !(state.0.is_finite() && state.1.is_finite()) {
            return Err(Error::Divergence {
                time: (n + 1) as f64 * h,
            });
        }
    }
    Ok(state)
}

fn finish(state: State, rem: f64, k: f64) -> State {
    if rem > 0.0 {
        rk4(state, k, rem)
    } else {
        state
    }
}

/// Angle and angular velocity at time `tau`.
pub fn pendulum_state(g: f64, tau: f64, config: &PendulumConfig) -> Result<(f64, f64)> {
    check_inputs(g, tau)?;
    let h = config.rk4_step;
    let k = g / config.length;
    let (n, rem) = split_time(tau, h);
    let state = march((config.initial_angle, config.initial_velocity), 0, n, k, h)?;
    let out = finish(state, rem, k);
    if !(out.0.is_finite() && out.1.is_finite()) {
        return Err(Error::Divergence { time: tau });
    }
    Ok(out)
}

/// Angle `x(tau; g)` of the nonlinear pendulum.
pub fn pendulum_angle(g: f64, tau: f64, config: &PendulumConfig) -> Result<f64> {
    Ok(pendulum_state(g, tau, config)?.0)
}

/// Angles at several times from a single sweep. Agrees bit-for-bit with
/// [`pendulum_angle`] at each time; `taus` need not be sorted.
pub fn pendulum_angles(g: f64, taus: &[f64], config: &PendulumConfig) -> Result<Vec<f64>> {
    for &tau in taus {
        check_inputs(g, tau)?;
    }
    let h = config.rk4_step;
    let k = g / config.length;
    let mut order: Vec<usize> = (0..taus.len()).collect();
    order.sort_by(|&a, &b| taus[a].total_cmp(&taus[b]));

    let mut out = vec![0.0; taus.len()];
    let mut state = (config.initial_angle, config.initial_velocity);
    let mut at = 0;
    for i in order {
        let (n, rem) = split_time(taus[i], h);
        state = march(state, at, n, k, h)?;
        at = n;
        let x = finish(state, rem, k).0;
        if !x.is_finite() {
            return Err(Error::Divergence { time: taus[i] });
        }
        out[i] = x;
    }
    Ok(out)
}

/// Trajectories integrated together; independent lanes keep the FPU busy.
const LANES: usize = 8;

#[inline(always)]
fn sin_lanes(x: &[f64; LANES]) -> [f64; LANES] {
    if x.iter().all(|v| v.abs() < SMALL_ANGLE) {
        std::array::from_fn(|l| sin_poly(x[l]))
    } else {
        std::array::from_fn(|l| sin(x[l]))
    }
}

/// [`rk4`] on every lane, stage by stage so the lanes vectorize.
#[inline]
fn rk4_lanes(x: &mut [f64; LANES], v: &mut [f64; LANES], k: &[f64; LANES], h: f64) {
    let f = |x: &[f64; LANES]| -> [f64; LANES] {
        let s = sin_lanes(x);
        std::array::from_fn(|l| -k[l] * s[l])
    };
    let b1 = f(x);
    let x2: [f64; LANES] = std::array::from_fn(|l| x[l] + 0.5 * h * v[l]);
    let v2: [f64; LANES] = std::array::from_fn(|l| v[l] + 0.5 * h * b1[l]);
    let b2 = f(&x2);
    let x3: [f64; LANES] = std::array::from_fn(|l| x[l] + 0.5 * h * v2[l]);
    let v3: [f64; LANES] = std::array::from_fn(|l| v[l] + 0.5 * h * b2[l]);
    let b3 = f(&x3);
    let x4: [f64; LANES] = std::array::from_fn(|l| x[l] + h * v3[l]);
    let v4: [f64; LANES] = std::array::from_fn(|l| v[l] + h * b3[l]);
    let b4 = f(&x4);
    for l in 0..LANES {
        let nx = x[l] + h / 6.0 * (v[l] + 2.0 * v2[l] + 2.0 * v3[l] + v4[l]);
        let nv = v[l] + h / 6.0 * (b1[l] + 2.0 * b2[l] + 2.0 * b3[l] + b4[l]);
        x[l] = nx;
        v[l] = nv;
    }
}

/// Angles for several gravities at the same times, row-major by gravity.
/// Each row equals [`pendulum_angles`] for that gravity bit-for-bit.
pub fn pendulum_angles_many(gs: &[f64], taus: &[f64], config: &PendulumConfig) -> Result<Vec<f64>> {
    for &g in gs {
        for &tau in taus {
            check_inputs(g, tau)?;
        }
    }
    let h = config.rk4_step;
    let mut order: Vec<usize> = (0..taus.len()).collect();
    order.sort_by(|&a, &b| taus[a].total_cmp(&taus[b]));
    let n_tau = taus.len();
    let mut out = vec![0.0; gs.len() * n_tau];

    for (c, chunk) in gs.chunks(LANES).enumerate() {
        // Short chunks repeat their last gravity in the spare lanes.
        let k: [f64; LANES] = std::array::from_fn(|l| chunk[l.min(chunk.len() - 1)] / config.length);
        let mut x = [config.initial_angle; LANES];
        let mut v = [config.initial_velocity; LANES];
        let mut at = 0;
        for &i in &order {
            let (n, rem) = split_time(taus[i], h);
            for step in at..n {
                rk4_lanes(&mut x, &mut v, &k, h);
                if !x.iter().chain(&v).all(|z| z.is_finite()) {
                    return Err(Error::Divergence {
                        time: (step + 1) as f64 * h,
                    });
                }
            }
            at = n;
            for l in 0..chunk.len() {
                let xl = finish((x[l], v[l]), rem, k[l]).0;
                if !xl.is_finite() {
                    return Err(Error::Divergence { time: taus[i] });
                }
                out[(c * LANES + l) * n_tau + i] = xl;
            }
        }
    }
    Ok(out)
}

/// Angle of the linearized pendulum released at rest: `x0 cos(tau sqrt(g / l))`.
pub fn linear_pendulum_angle(g: f64, tau: f64, config: &PendulumConfig) -> Result<f64> {
    if config.initial_velocity != 0.0 {
        return Err(Error::Unsupported(
            "the linearized solution assumes zero initial velocity".into(),
        ));
    }
    check_inputs(g, tau)?;
    Ok(config.initial_angle * (tau * (g / config.length).sqrt()).cos())
}

/// RK4 grid states of one trajectory, for evaluating many times cheaply.
#[derive(Debug, Clone)]
pub struct PendulumTrajectory {
    k: f64,
    h: f64,
    grid: Vec<State>,
}

impl PendulumTrajectory {
    /// Integrates up to (at least) `t_max`.
    pub fn new(g: f64, t_max: f64, config: &PendulumConfig) -> Result<Self> {
        check_inputs(g, t_max)?;
        let h = config.rk4_step;
        let k = g / config.length;
        let (n, _) = split_time(t_max, h);
        let mut grid = Vec::with_capacity(n as usize + 2);
        let mut state = (config.initial_angle, config.initial_velocity);
        grid.push(state);
        for step in 0..=n {
            state = march(state, step, step + 1, k, h)?;
            grid.push(state);
        }
        Ok(Self { k, h, grid })
    }

    pub fn t_max(&self) -> f64 {
        (self.grid.len() - 1) as f64 * self.h
    }

    /// Angle and velocity at `tau`; identical to [`pendulum_state`].
    pub fn state_at(&self, tau: f64) -> Result<(f64, f64)> {
        let (n, rem) = split_time(tau.max(0.0), self.h);
        let state = *self.grid.get(n as usize).ok_or_else(|| {
            Error::Config(format!("time {tau} is beyond the stored trajectory"))
        })?;
        Ok(finish(state, rem, self.k))
    }

    pub fn angle_at(&self, tau: f64) -> Result<f64> {
        Ok(self.state_at(tau)?.0)
    }

    /// The first `count` times at which the angle changes sign, located by
    /// bisection inside the RK4 step that brackets each crossing.
    pub fn zero_crossings(&self, count: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(count);
        for n in 0..self.grid.len() - 1 {
            if out.len() == count {
                break;
            }
            let (a, b) = (self.grid[n].0, self.grid[n + 1].0);
            if a == 0.0 && n > 0 {
                out.push(n as f64 * self.h);
                continue;
            }
            if a * b >= 0.0 {
                continue;
            }
            let (mut lo, mut hi) = (0.0, self.h);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                let x = finish(self.grid[n], mid, self.k).0;
                if (x < 0.0) == (a < 0.0) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            out.push(n as f64 * self.h + 0.5 * (lo + hi));
        }
        out
    }
}

/// The first `count` zero crossings of the trajectory with gravity `g`.
pub fn zero_crossing_times(g: f64, count: usize, config: &PendulumConfig) -> Result<Vec<f64>> {
    if g <= 0.0 {
        return Err(Error::Config("zero crossings need positive gravity".into()));
    }
    // The nonlinear period exceeds the linear one by well under 1% for |x0| < 0.5.
    let period = 2.0 * std::f64::consts::PI * (config.length / g).sqrt();
    let mut horizon = (count as f64 * 0.5 + 1.0) * period;
    loop {
        let crossings = PendulumTrajectory::new(g, horizon, config)?.zero_crossings(count);
        if crossings.len() == count {
            return Ok(crossings);
        }
        horizon *= 2.0;
        if horizon > 1e7 {
            return Err(Error::Config("pendulum never crosses zero".into()));
        }
    }
}

/// Normal timing error, `N(mean, variance)` seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeNoise {
    pub mean: f64,
    pub variance: f64,
}

impl Default for TimeNoise {
    /// Human visual reaction time.
    fn default() -> Self {
        Self {
            mean: 0.45,
            variance: 0.01,
        }
    }
}

/// Monte Carlo estimate of the angle-error variance caused by timing error.
///
/// Each of `n_mc` replicates perturbs every scheduled time by a draw from
/// `time_noise` and compares the angle of the `g_nominal` trajectory at the
/// perturbed and nominal times. Returns the mean squared angle difference.
pub fn calibrate_noise_variance<R: Rng + ?Sized>(
    config: &PendulumConfig,
    g_nominal: f64,
    schedule: &[f64],
    time_noise: TimeNoise,
    n_mc: usize,
    rng: &mut R,
) -> Result<f64> {
    if n_mc < 100 {
        return Err(Error::Config(format!("need at least 100 replicates, got {n_mc}")));
    }
    if schedule.is_empty() {
        return Err(Error::Config("empty calibration schedule".into()));
    }
    if !(time_noise.variance >= 0.0 && time_noise.mean.is_finite()) {
        return Err(Error::Config("invalid time-noise parameters".into()));
    }
    let normal = Normal::new(time_noise.mean, time_noise.variance.sqrt())
        .map_err(|e| Error::Config(format!("time noise: {e}")))?;
    let perturbed: Vec<f64> = (0..n_mc * schedule.len())
        .map(|i| (schedule[i % schedule.len()] + normal.sample(rng)).max(0.0))
        .collect();
    let t_max = perturbed
        .iter()
        .chain(schedule)
        .copied()
        .fold(0.0, f64::max);
    let trajectory = PendulumTrajectory::new(g_nominal, t_max, config)?;
    let nominal = schedule
        .iter()
        .map(|&t| trajectory.angle_at(t))
        .collect::<Result<Vec<_>>>()?;
    let mut total = 0.0;
    for (i, &t) in perturbed.iter().enumerate() {
        let d = trajectory.angle_at(t)? - nominal[i % schedule.len()];
        total += d * d;
    }
    Ok(total / perturbed.len() as f64)
}

/// Angle observed at a measured time. The Garching data records zero
/// crossings, so `angle` is 0 for every row of that table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PendulumObservation {
    pub tau: f64,
    pub angle: f64,
}

/// Gravity estimation from pendulum timings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PendulumModel {
    pub config: PendulumConfig,
    pub prior: TruncatedNormalPrior,
    pub noise: GaussianNoise,
}

impl PendulumModel {
    pub fn new(config: PendulumConfig, prior: TruncatedNormalPrior, noise: GaussianNoise) -> Result<Self> {
        config.validate()?;
        prior.validate()?;
        GaussianNoise::new(noise.variance)?;
        Ok(Self { config, prior, noise })
    }
}

impl ForwardModel for PendulumModel {
    type Observation = PendulumObservation;

    fn dim(&self) -> usize {
        1
    }

    fn sample_prior<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        Ok(vec![self.prior.sample(rng)?])
    }

    fn prior_log_density(&self, theta: &[f64]) -> f64 {
        self.prior.log_density(theta[0])
    }

    fn log_likelihood(&self, theta: &[f64], observations: &[PendulumObservation]) -> Result<f64> {
        let g = theta[0];
        if observations.len() == 1 {
            let x = pendulum_angle(g, observations[0].tau, &self.config)?;
            return Ok(gaussian_log_likelihood(observations[0].angle, x, &self.noise));
        }
        let taus: Vec<f64> = observations.iter().map(|o| o.tau).collect();
        let angles = pendulum_angles(g, &taus, &self.config)?;
        Ok(observations
            .iter()
            .zip(angles)
            .map(|(o, x)| gaussian_log_likelihood(o.angle, x, &self.noise))
            .sum())
    }

    fn log_likelihood_many(&self, thetas: &[f64], observations: &[PendulumObservation]) -> Result<Vec<f64>> {
        let taus: Vec<f64> = observations.iter().map(|o| o.tau).collect();
        let angles = pendulum_angles_many(thetas, &taus, &self.config)?;
        if taus.is_empty() {
            return Ok(vec![0.0; thetas.len()]);
        }
        Ok(angles
            .chunks_exact(taus.len())
            .map(|row| {
                observations
                    .iter()
                    .zip(row)
                    .map(|(o, x)| gaussian_log_likelihood(o.angle, *x, &self.noise))
                    .sum()
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamRng;
    use rand::SeedableRng;
    use std::f64::consts::PI;

    const TABLE1: [f64; 10] = [1.51, 4.06, 7.06, 9.90, 12.66, 15.40, 15.58, 18.56, 21.38, 24.36];

    #[test]
    fn lockstep_integration_matches_single_sweeps() {
        let taus = [3.2, 0.4, 11.0005, 7.0];
        for x0 in [PI / 36.0, 0.1, 1.2] {
            let c = cfg(x0);
            let gs: Vec<f64> = (0..11).map(|i| 8.5 + 0.17 * i as f64).collect();
            let many = pendulum_angles_many(&gs, &taus, &c).unwrap();
            for (g, row) in gs.iter().zip(many.chunks_exact(taus.len())) {
                let single = pendulum_angles(*g, &taus, &c).unwrap();
                assert_eq!(row, single.as_slice(), "x0={x0} g={g}");
            }
        }
    }

    #[test]
    fn small_angle_sine_matches_library() {
        for i in -2000..=2000 {
            let x = i as f64 * 0.13 / 2000.0;
            let err = (sin(x) - x.sin()).abs();
            assert!(err <= 2.0 * f64::EPSILON * x.abs(), "x={x} err={err}");
        }
    }

    fn cfg(x0: f64) -> PendulumConfig {
        PendulumConfig {
            initial_angle: x0,
            ..PendulumConfig::garching()
        }
    }

    #[test]
    fn gravity_examples() {
        assert!((reference_gravity(48.25, 482.0) - 9.808).abs() < 1e-3);
        assert_eq!(reference_gravity(0.0, 0.0), 9.780327);
        let pole = reference_gravity(90.0, 0.0);
        assert!((pole - 9.780327 * (1.0 + 5.3024e-3)).abs() < 1e-12);
        assert!((pole - 9.832186).abs() < 1e-6);
    }

    #[test]
    fn trivial_trajectories() {
        let c = PendulumConfig::garching();
        assert_eq!(pendulum_angle(0.0, 13.7, &c).unwrap(), c.initial_angle);
        assert_eq!(pendulum_angle(9.8, 0.0, &c).unwrap(), c.initial_angle);
    }

    #[test]
    fn small_amplitude_matches_linear_solution() {
        let c = cfg(0.001);
        let x = pendulum_angle(9.808, 1.0, &c).unwrap();
        let expected = 0.001 * (9.808f64 / 7.4).sqrt().cos();
        assert!((x - expected).abs() < 1e-7);
    }

    #[test]
    fn linear_solution_examples() {
        let c = PendulumConfig::garching();
        let g = 9.81;
        let w = (g / c.length).sqrt();
        assert_eq!(linear_pendulum_angle(g, 0.0, &c).unwrap(), c.initial_angle);
        assert!((linear_pendulum_angle(g, PI / w, &c).unwrap() + c.initial_angle).abs() < 1e-15);
        assert!(linear_pendulum_angle(g, 0.5 * PI / w, &c).unwrap().abs() < 1e-15);
        let moving = PendulumConfig {
            initial_velocity: 0.1,
            ..c
        };
        assert!(matches!(
            linear_pendulum_angle(g, 1.0, &moving),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn linearization_error_is_tiny_at_small_amplitude() {
        for x0 in [0.002, -0.001, 0.0007] {
            let c = cfg(x0);
            let mut tau = 0.0;
            while tau <= 25.0 {
                let d = pendulum_angle(9.808, tau, &c).unwrap() - linear_pendulum_angle(9.808, tau, &c).unwrap();
                assert!(d.abs() <= 1e-5 * x0.abs(), "x0={x0} tau={tau} d={d}");
                tau += 0.37;
            }
        }
    }

    #[test]
    fn linearization_error_follows_frequency_shift() {
        // The nonlinear frequency is w (1 - x0^2 / 16) to leading order, so
        // the phase lag grows like w tau x0^2 / 16.
        let (g, x0) = (9.808, 0.01);
        let c = cfg(x0);
        let w = (g / c.length).sqrt();
        let mut tau = 0.0;
        while tau <= 25.0 {
            let d = pendulum_angle(g, tau, &c).unwrap() - linear_pendulum_angle(g, tau, &c).unwrap();
            let bound = x0 * (w * tau * x0 * x0 / 16.0 + x0 * x0 / 96.0) * 1.1;
            assert!(d.abs() <= bound, "tau={tau} d={d} bound={bound}");
            tau += 0.37;
        }
    }

    #[test]
    fn sweep_agrees_with_single_evaluations() {
        let c = PendulumConfig::garching();
        for g in [0.5, 9.12, 9.808, 19.9] {
            let sweep = pendulum_angles(g, &TABLE1, &c).unwrap();
            let traj = PendulumTrajectory::new(g, 25.0, &c).unwrap();
            for (tau, x) in TABLE1.iter().zip(&sweep) {
                assert_eq!(*x, pendulum_angle(g, *tau, &c).unwrap());
                assert_eq!(*x, traj.angle_at(*tau).unwrap());
            }
        }
        // Unsorted input.
        let shuffled = [15.58, 1.51, 24.36, 4.06];
        let sweep = pendulum_angles(9.8, &shuffled, &c).unwrap();
        for (tau, x) in shuffled.iter().zip(sweep) {
            assert_eq!(x, pendulum_angle(9.8, *tau, &c).unwrap());
        }
    }

    #[test]
    fn negative_inputs_rejected() {
        let c = PendulumConfig::garching();
        assert!(pendulum_angle(-1.0, 1.0, &c).is_err());
        assert!(pendulum_angle(1.0, -1.0, &c).is_err());
        assert!(PendulumConfig::new(0.0, 0.1, 0.0, 1e-3).is_err());
        assert!(PendulumConfig::new(1.0, 4.0, 0.0, 1e-3).is_err());
        assert!(PendulumConfig::new(1.0, 0.1, 0.0, 0.0).is_err());
    }

    #[test]
    fn divergence_is_reported() {
        let c = PendulumConfig {
            length: 1e-300,
            ..PendulumConfig::garching()
        };
        assert!(matches!(
            pendulum_angle(1e10, 1.0, &c),
            Err(Error::Divergence { .. })
        ));
        assert!(matches!(
            pendulum_angles_many(&[9.8, 1e10], &[0.5, 1.0], &c),
            Err(Error::Divergence { .. })
        ));
    }

    #[test]
    fn zero_crossings_near_quarter_periods() {
        let c = PendulumConfig::garching();
        let z = zero_crossing_times(10.0, 10, &c).unwrap();
        assert_eq!(z.len(), 10);
        let quarter = 0.5 * PI * (7.4f64 / 10.0).sqrt();
        assert!((z[0] - quarter).abs() < 0.01 * quarter);
        for t in &z {
            assert!(pendulum_angle(10.0, *t, &c).unwrap().abs() < 1e-9);
        }
    }

    #[test]
    fn calibration_degenerate_noise_gives_zero() {
        let c = PendulumConfig::garching();
        let noise = TimeNoise {
            mean: 0.0,
            variance: 0.0,
        };
        let mut rng = StreamRng::seed_from_u64(1);
        let s2 = calibrate_noise_variance(&c, 10.0, &TABLE1, noise, 200, &mut rng).unwrap();
        assert_eq!(s2, 0.0);
    }

    #[test]
    fn calibration_scales_with_noise_variance() {
        let c = PendulumConfig::garching();
        let schedule = zero_crossing_times(10.0, 10, &c).unwrap();
        let run = |sd: f64| {
            let mut rng = StreamRng::seed_from_u64(77);
            let noise = TimeNoise {
                mean: 0.0,
                variance: sd * sd,
            };
            calibrate_noise_variance(&c, 10.0, &schedule, noise, 4000, &mut rng).unwrap()
        };
        let ratio = run(0.2) / run(0.1);
        assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn calibration_requires_replicates() {
        let c = PendulumConfig::garching();
        let mut rng = StreamRng::seed_from_u64(1);
        assert!(calibrate_noise_variance(&c, 10.0, &TABLE1, TimeNoise::default(), 99, &mut rng).is_err());
    }

    #[test]
    fn likelihood_sums_observations() {
        let model = PendulumModel::new(
            PendulumConfig::garching(),
            TruncatedNormalPrior::default(),
            GaussianNoise::default(),
        )
        .unwrap();
        let obs: Vec<PendulumObservation> = TABLE1
            .iter()
            .map(|&tau| PendulumObservation { tau, angle: 0.0 })
            .collect();
        let joint = model.log_likelihood(&[9.5], &obs).unwrap();
        let sum: f64 = obs
            .iter()
            .map(|o| model.log_likelihood(&[9.5], std::slice::from_ref(o)).unwrap())
            .sum();
        assert!((joint - sum).abs() < 1e-10);
        assert_eq!(model.log_posterior(&[25.0], &obs).unwrap(), f64::NEG_INFINITY);
    }
}
