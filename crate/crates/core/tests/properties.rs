use bnlab::diffusion_analysis::{mean_exit_time, QuadratureConfig};
use bnlab::monte_carlo::{path_rng, run_exit_ensemble, run_stationary_ensemble, EnsembleSpec, StationarySpec};
use bnlab::noise_models::{alpha_drift, tsb_drift, NoiseModel};
use bnlab::sde_integrators::{simulate_path, Dynamics, ExitRule, Recording, StepConfig};
use proptest::prelude::*;
use statrs::distribution::{Binomial, DiscreteCDF};

fn step(dt: f64, horizon: f64) -> StepConfig {
    StepConfig {
        dt,
        horizon,
        ..StepConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn drift_is_odd_and_alpha_one_is_tsb(x in -0.999f64..0.999, alpha in 0.2f64..4.0) {
        prop_assert_eq!(alpha_drift(-x, alpha).unwrap(), -alpha_drift(x, alpha).unwrap());
        prop_assert_eq!(alpha_drift(x, 1.0).unwrap().to_bits(), tsb_drift(x).unwrap().to_bits());
    }

    #[test]
    fn same_seed_same_path(seed in any::<u64>(), index in 0u64..1000, q in -4.0f64..0.9, x0 in -0.9f64..0.9) {
        let model = NoiseModel::tsb(q).unwrap();
        let cfg = step(1e-3, 0.5);
        let rule = ExitRule::full(&model, &cfg);
        let rec = Recording { every: Some(0.01), ..Recording::default() };
        let run = || {
            let mut rng = path_rng(seed, index);
            simulate_path(x0, 0.0, Dynamics::Overdamped, &model, &cfg, &rule, &rec, &mut rng).unwrap()
        };
        prop_assert_eq!(run(), run());
    }

    #[test]
    fn longer_horizon_never_loses_exits(seed in any::<u64>(), q in -3.0f64..-0.5, h in 0.05f64..0.5) {
        let model = NoiseModel::tsb(q).unwrap();
        let short = EnsembleSpec::new(model, Dynamics::Overdamped, 40, step(1e-3, h), seed);
        let long = EnsembleSpec { step: step(1e-3, 2.0 * h), ..short.clone() };
        let (a, b) = (run_exit_ensemble(&short).unwrap(), run_exit_ensemble(&long).unwrap());
        prop_assert!(b.n_exited >= a.n_exited);
        prop_assert_eq!(a.n_exited + a.n_censored, 40);
    }

    #[test]
    fn underdamped_paths_stay_inside(seed in any::<u64>(), q in -6.0f64..0.5, m in 0.05f64..2.0) {
        let model = NoiseModel::tsb(q).unwrap();
        let cfg = step(1e-3, 2.0);
        let rule = ExitRule::full(&model, &cfg);
        let mut rng = path_rng(seed, 0);
        let out = simulate_path(0.0, 0.0, Dynamics::Underdamped { m }, &model, &cfg, &rule, &Recording::default(), &mut rng)
            .unwrap();
        prop_assert!(!out.result.exited);
        prop_assert!(out.result.max_abs_x < 1.0);
    }
}

#[test]
fn ensembles_are_reproducible() {
    let model = NoiseModel::tsb(-1.5).unwrap();
    let mut spec = EnsembleSpec::new(model, Dynamics::Overdamped, 500, step(1e-3, 20.0), 9);
    spec.control_variate = true;
    assert_eq!(run_exit_ensemble(&spec).unwrap(), run_exit_ensemble(&spec).unwrap());

    let st = StationarySpec {
        burn_in: 2.0,
        samples_per_path: 20,
        ..StationarySpec::default()
    };
    let spec = EnsembleSpec::new(NoiseModel::tsb(0.3).unwrap(), Dynamics::Overdamped, 50, step(1e-3, 1.0), 10);
    let a = run_stationary_ensemble(&spec, &st).unwrap();
    let b = run_stationary_ensemble(&spec, &st).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn ensemble_matches_serial_paths_in_any_order() {
    let model = NoiseModel::tsb(-2.0).unwrap();
    let spec = EnsembleSpec::new(model, Dynamics::Overdamped, 64, step(1e-3, 20.0), 123);
    let stats = run_exit_ensemble(&spec).unwrap();

    let rule = ExitRule::full(&model, &spec.step);
    let mut times: Vec<f64> = (0..64u64)
        .rev()
        .map(|i| {
            let mut rng = path_rng(123, i);
            simulate_path(0.0, 0.0, Dynamics::Overdamped, &model, &spec.step, &rule, &Recording::default(), &mut rng)
                .unwrap()
                .result
                .exit_time
                .unwrap()
        })
        .collect();
    times.reverse();
    let mean = times.iter().sum::<f64>() / 64.0;
    assert_eq!(stats.n_exited, 64);
    assert!((stats.mean_exit_time.unwrap() - mean).abs() <= 1e-14 * mean);
}

#[test]
fn exit_sides_are_balanced() {
    let n = 10_000;
    let spec = EnsembleSpec::new(NoiseModel::tsb(-2.0).unwrap(), Dynamics::Overdamped, n, step(1e-3, 50.0), 2);
    let s = run_exit_ensemble(&spec).unwrap();
    assert_eq!(s.n_exited, n);
    let (left, right) = s.side_counts;
    assert_eq!(left + right, n);
    // Two-sided 99.9% interval of Binomial(n, 1/2).
    let b = Binomial::new(0.5, n as u64).unwrap();
    let lo = (0..=n as u64).find(|&k| b.cdf(k) >= 5e-4).unwrap();
    let hi = (0..=n as u64).find(|&k| b.cdf(k) >= 1.0 - 5e-4).unwrap();
    assert!((lo..=hi).contains(&(left as u64)), "left {left}, interval [{lo}, {hi}]");
}

#[test]
fn bias_shrinks_roughly_linearly_in_dt() {
    let exact = mean_exit_time(0.0, -1.0, 1.0, &NoiseModel::tsb(-1.0).unwrap(), &QuadratureConfig::default()).unwrap();
    let errors: Vec<f64> = [4e-4, 2e-4, 1e-4]
        .iter()
        .map(|&dt| {
            let mut spec = EnsembleSpec::new(NoiseModel::tsb(-1.0).unwrap(), Dynamics::Overdamped, 50_000, step(dt, 100.0), 17);
            spec.control_variate = true;
            let s = run_exit_ensemble(&spec).unwrap();
            (s.cv_mean.unwrap() - exact).abs()
        })
        .collect();
    assert!(errors[0] > errors[1] && errors[1] > errors[2], "{errors:?}");
    let slope = (errors[0] / errors[2]).ln() / 4f64.ln();
    assert!((0.5..1.5).contains(&slope), "slope {slope}, errors {errors:?}");
}
