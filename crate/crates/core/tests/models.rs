use sequifilt::models::{
    pendulum_angle, GaussianMeanModel, PendulumConfig, PendulumTrajectory,
};

fn config(x0: f64, h: f64) -> PendulumConfig {
    PendulumConfig::new(7.4, x0, 0.0, h).unwrap()
}

#[test]
fn rk4_is_fourth_order() {
    for (g, x0, tau) in [(9.81, 0.5, 5.0), (9.0, 0.3, 3.0), (12.0, 0.2, 8.0)] {
        let h = 0.05;
        let reference = pendulum_angle(g, tau, &config(x0, h / 8.0)).unwrap();
        let e1 = (pendulum_angle(g, tau, &config(x0, h)).unwrap() - reference).abs();
        let e2 = (pendulum_angle(g, tau, &config(x0, h / 2.0)).unwrap() - reference).abs();
        let ratio = e1 / e2;
        assert!((12.0..=20.0).contains(&ratio), "g={g} x0={x0}: ratio {ratio}");
    }
}

#[test]
fn energy_is_conserved_over_25_seconds() {
    let cfg = PendulumConfig::garching();
    let g = 9.808;
    let energy = |x: f64, v: f64| 0.5 * cfg.length * v * v - g * x.cos();
    let traj = PendulumTrajectory::new(g, 25.0, &cfg).unwrap();
    let e0 = energy(cfg.initial_angle, cfg.initial_velocity);
    let mut worst = 0.0f64;
    for i in 0..=2500 {
        let (x, v) = traj.state_at(i as f64 * 0.01).unwrap();
        worst = worst.max(((energy(x, v) - e0) / e0).abs());
    }
    assert!(worst < 1e-8, "relative drift {worst}");
}

#[test]
fn rho_is_nondecreasing_without_signal() {
    let mut prev = 0.0;
    for t in 0..200 {
        let rho = GaussianMeanModel::with_sum(0.0, t).rho_t();
        assert!(rho >= prev, "t={t}");
        prev = rho;
    }
}
