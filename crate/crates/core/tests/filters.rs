use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use sequifilt::diagnostics::{default_test_family, sup_difference, test_integrals};
use sequifilt::filters::singleton_batches;
use sequifilt::models::{
    pendulum_angles, ForwardModel, GaussianMeanModel, GaussianNoise, PendulumConfig, PendulumModel,
    PendulumObservation, TruncatedNormalPrior,
};
use sequifilt::particle::log_sum_exp;
use sequifilt::rng::StreamRng;
use sequifilt::{run_filter, FilterConfig, ParticleApproximation};

const YS: [f64; 6] = [0.8, 0.1, 1.4, 0.35, -0.2, 0.9];

fn joint_log_likelihoods(model: &GaussianMeanModel, approx: &ParticleApproximation, ys: &[f64]) -> Vec<f64> {
    approx
        .positions()
        .map(|x| ys.iter().map(|y| model.log_likelihood(x, &[*y]).unwrap()).sum())
        .collect()
}

#[test]
fn sis_weights_are_normalized_joint_likelihood() {
    let model = GaussianMeanModel::new(0.5);
    for seed in 0..5 {
        let trace = run_filter(&model, &singleton_batches(&YS), &FilterConfig::sis(16, seed)).unwrap();
        let ll = joint_log_likelihoods(&model, &trace.initial, &YS);
        let norm = log_sum_exp(&ll);
        for (lw, l) in trace.final_approx.log_weights().iter().zip(&ll) {
            assert!((lw - (l - norm)).abs() < 1e-10);
        }
        assert_eq!(trace.final_approx.flat_positions(), trace.initial.flat_positions());
    }
}

#[test]
fn sis_is_invariant_to_batching() {
    let model = GaussianMeanModel::new(0.5);
    let cfg = FilterConfig::sis(16, 9);
    let one_by_one = run_filter(&model, &singleton_batches(&YS), &cfg).unwrap();
    let single = run_filter(&model, &[YS.to_vec()], &cfg).unwrap();
    let split = run_filter(&model, &[YS[..2].to_vec(), YS[2..].to_vec()], &cfg).unwrap();
    for other in [&single, &split] {
        for (a, b) in one_by_one.final_approx.log_weights().iter().zip(other.final_approx.log_weights()) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!((one_by_one.cumulative_log_evidence() - other.cumulative_log_evidence()).abs() < 1e-10);
    }
}

#[test]
fn log_evidence_telescopes() {
    let model = GaussianMeanModel::new(0.5);
    let trace = run_filter(&model, &singleton_batches(&YS), &FilterConfig::sis(12, 4)).unwrap();
    let ll = joint_log_likelihoods(&model, &trace.initial, &YS);
    let w0: Vec<f64> = trace.initial.log_weights().to_vec();
    let terms: Vec<f64> = w0.iter().zip(&ll).map(|(w, l)| w + l).collect();
    let brute = log_sum_exp(&terms);
    let summed: f64 = trace.records.iter().map(|r| r.log_evidence_increment).sum();
    assert!((trace.cumulative_log_evidence() - brute).abs() < 1e-10);
    assert!((summed - brute).abs() < 1e-10);
    assert_eq!(trace.records.len(), YS.len());
}

fn mean_and_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (m, xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0))
}

#[test]
fn always_resampling_smc_is_unbiased_against_sis() {
    let model = GaussianMeanModel::new(0.5);
    let batches = singleton_batches(&YS[..4]);
    let (mut smc, mut sis) = (Vec::new(), Vec::new());
    for seed in 0..200 {
        let cfg = FilterConfig {
            threshold_fraction: 1.0,
            mcmc_moves: 0,
            ..FilterConfig::smc(100, seed)
        };
        let a = run_filter(&model, &batches, &cfg).unwrap();
        assert_eq!(a.resample_count(), batches.len());
        smc.push(a.final_mean()[0]);
        sis.push(run_filter(&model, &batches, &FilterConfig::sis(100, seed + 10_000)).unwrap().final_mean()[0]);
    }
    let (ma, va) = mean_and_var(&smc);
    let (mb, vb) = mean_and_var(&sis);
    let se = (va / 200.0 + vb / 200.0).sqrt();
    assert!((ma - mb).abs() < 4.0 * se, "{ma} vs {mb}, se {se}");
}

fn synthetic_pendulum(seed: u64, n: usize) -> (PendulumModel, Vec<PendulumObservation>) {
    let model = PendulumModel::new(
        PendulumConfig::garching(),
        TruncatedNormalPrior::default(),
        GaussianNoise::default(),
    )
    .unwrap();
    let mut rng = StreamRng::seed_from_u64(seed);
    let taus: Vec<f64> = (0..n).map(|i| 1.0 + 23.0 * (i as f64 + 0.5) / n as f64).collect();
    let clean = pendulum_angles(9.81, &taus, &model.config).unwrap();
    let noise = Normal::new(0.0, model.noise.variance.sqrt()).unwrap();
    let obs = taus
        .iter()
        .zip(clean)
        .map(|(&tau, x)| PendulumObservation {
            tau,
            angle: x + noise.sample(&mut rng),
        })
        .collect();
    (model, obs)
}

#[test]
fn more_data_in_batches_does_not_widen_the_posterior() {
    for seed in 0..20 {
        let (model, obs) = synthetic_pendulum(seed, 50);
        // Every fifth measurement first, then the remaining forty.
        let (first, rest): (Vec<_>, Vec<_>) = obs.iter().cloned().enumerate().partition(|(i, _)| i % 5 == 0);
        let first: Vec<_> = first.into_iter().map(|(_, o)| o).collect();
        let rest: Vec<_> = rest.into_iter().map(|(_, o)| o).collect();
        let cfg = FilterConfig::smc(300, seed);
        let small = run_filter(&model, &[first.clone()], &cfg).unwrap();
        let large = run_filter(&model, &[first, rest], &cfg).unwrap();
        let (v10, v50) = (
            small.final_approx.weighted_variance()[0],
            large.final_approx.weighted_variance()[0],
        );
        assert!(v50 <= v10, "seed {seed}: {v50} > {v10}");
    }
}

#[test]
fn weak_distance_to_exact_posterior_shrinks_with_particles() {
    let model = GaussianMeanModel::new(0.5);
    let mut data_model = model;
    let ys = model.simulate(10, &mut StreamRng::seed_from_u64(2024));
    for y in &ys {
        data_model.observe(*y);
    }
    let (mean, var) = data_model.conjugate_posterior();
    let exact = Normal::new(mean, var.sqrt()).unwrap();
    let mut rng = StreamRng::seed_from_u64(77);
    let reference: Vec<f64> = (0..1_000_000).map(|_| exact.sample(&mut rng)).collect();
    let reference = ParticleApproximation::from_samples(&reference).unwrap();
    let family: Vec<_> = default_test_family(&reference, &reference)
        .into_iter()
        .map(|t| move |x: &[f64]| t.eval(x))
        .collect();
    let ref_integrals = test_integrals(&reference, &family).unwrap();

    let batches = singleton_batches(&ys);
    let counts = [100, 1_000, 10_000];
    let mut monotone = 0;
    let mut totals = [0.0; 3];
    for seed in 0..20 {
        let d: Vec<f64> = counts
            .iter()
            .map(|&m| {
                let trace = run_filter(&model, &batches, &FilterConfig::smc(m, seed)).unwrap();
                sup_difference(&test_integrals(&trace.final_approx, &family).unwrap(), &ref_integrals)
            })
            .collect();
        if d[0] > d[1] && d[1] > d[2] {
            monotone += 1;
        }
        for (t, v) in totals.iter_mut().zip(&d) {
            *t += v;
        }
    }
    assert!(monotone > 10, "monotone in {monotone} of 20 seeds");
    assert!(totals[0] > totals[1] && totals[1] > totals[2], "{totals:?}");
}
