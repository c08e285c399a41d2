use eulerlab_core::ode::{integrate_fixed_steps, refine_collapse_time_at, CollapseDetection};
use eulerlab_core::{integrate, integrate_with, IntegratorOptions, ModelParams, SeedData, TrajectoryStatus};
use proptest::prelude::*;

fn params(gamma: f64) -> ModelParams {
    ModelParams::new(1.0, gamma).unwrap()
}

fn max_diff(a: &[f64; 5], b: &[f64; 5]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn fixed_step_halving_shows_fifth_order() {
    let seed = SeedData::new(1.0, 0.3, 1.0, 0.5, -0.2, 1.0).unwrap();
    let p = params(1.4);
    let reference = integrate_fixed_steps(&seed, &p, 1.0, 4096).unwrap().to_vec();
    let errors: Vec<f64> = [8, 16, 32]
        .iter()
        .map(|&n| max_diff(&integrate_fixed_steps(&seed, &p, 1.0, n).unwrap().to_vec(), &reference))
        .collect();
    for w in errors.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!((order - 5.0).abs() < 0.5, "errors {errors:?}, order {order}");
    }
}

#[test]
fn adaptive_matches_fine_fixed_steps() {
    let seed = SeedData::new(1.0, -0.2, 0.5, 1.0, 0.0, 1.2).unwrap();
    let p = params(2.0);
    let fine = integrate_fixed_steps(&seed, &p, 2.0, 8192).unwrap().to_vec();
    let tr = integrate(&seed, &p, 2.0, 1e-12, 1e-14).unwrap();
    assert!(max_diff(&tr.last().to_vec(), &fine) < 1e-10);
}

#[test]
fn dense_output_is_continuous_across_steps() {
    let seed = SeedData::new(1.0, 0.0, -1.0, 0.5, 0.5, 1.0).unwrap();
    let tr = integrate(&seed, &params(3.0), 0.9, 1e-10, 1e-12).unwrap();
    for seg in tr.dense.windows(2) {
        let left = seg[0].eval(seg[0].t1());
        let right = seg[1].eval(seg[1].t0);
        assert!(max_diff(&left, &right) <= 1e-12 * (1.0 + right.iter().fold(0.0f64, |m, v| m.max(v.abs()))));
    }
    for s in &tr.states {
        assert_eq!(tr.eval(s.t).unwrap(), *s);
    }
}

#[test]
fn collapse_time_barely_moves_with_threshold() {
    // the power-law extrapolation past the threshold removes most of the dependence
    let seed = SeedData::symmetric(1.0, 0.0, -1.0, 1.0).unwrap();
    let p = params(2.0);
    let exact = std::f64::consts::PI / (2.0 * 2f64.sqrt());
    for fraction in [1e-4, 1e-6, 1e-8, 0.5e-8] {
        let opts = IntegratorOptions { collapse_fraction: fraction, ..IntegratorOptions::default() };
        let tr = integrate_with(&seed, &p, 10.0, &opts).unwrap();
        let t = tr.blowup_time().unwrap();
        assert!((t - exact).abs() < 1e-6, "fraction {fraction}: {t}");
        let again = refine_collapse_time_at(&tr, fraction).unwrap();
        assert!((again - t).abs() < 1e-9);
    }
}

#[test]
fn hubble_rate_identity_along_trajectory() {
    // d/dt(a'/a) + (a'/a)^2 = xi / a^(gamma+1), the derivative taken from the dense
    // output by a Richardson-extrapolated central difference
    let seed = SeedData::new(1.5, 0.4, -0.7, 0.3, 0.1, 1.0).unwrap();
    let gamma = 1.4;
    let tr = integrate(&seed, &params(gamma), 2.0, 1e-10, 1e-12).unwrap();
    let hubble = |t: f64| tr.eval(t).unwrap().hubble();
    let h = 1e-3;
    for s in tr.states.iter().filter(|s| s.t > 2.0 * h && s.t < 2.0 - 2.0 * h) {
        let d1 = (hubble(s.t + h) - hubble(s.t - h)) / (2.0 * h);
        let d2 = (hubble(s.t + 2.0 * h) - hubble(s.t - 2.0 * h)) / (4.0 * h);
        let dh = (4.0 * d1 - d2) / 3.0;
        let lhs = dh + s.hubble().powi(2);
        let rhs = seed.xi / s.a.powf(gamma + 1.0);
        assert!((lhs - rhs).abs() <= 1e-8 * rhs.abs(), "t={}: {lhs} vs {rhs}", s.t);
    }
}

#[test]
fn stiff_collapse_falls_back_to_step_underflow() {
    // gamma = 3 from rest: a ~ sqrt(2 (T - t)), so a = 1e-8 sits inside the last ulp of t
    let seed = SeedData::symmetric(1.0, 0.0, -1.0, 1.0).unwrap();
    let tr = integrate(&seed, &params(3.0), 10.0, 1e-10, 1e-12).unwrap();
    match tr.status {
        TrajectoryStatus::BlowupDetected { t_collapse, detection } => {
            assert_eq!(detection, CollapseDetection::StepUnderflow);
            assert!((t_collapse - 1.0).abs() < 1e-9);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn max_steps_is_reported() {
    let seed = SeedData::symmetric(1.0, 0.0, 1.0, 1.0).unwrap();
    let opts = IntegratorOptions { max_steps: 5, ..IntegratorOptions::default() };
    let err = integrate_with(&seed, &params(2.0), 100.0, &opts).unwrap_err();
    assert!(err.to_string().contains('5'), "{err}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn emden_energy_is_conserved(
        a0 in 0.3f64..3.0,
        a1 in -1.0f64..2.0,
        xi in 0.0f64..2.0,
        gamma in 1.1f64..3.5,
    ) {
        let seed = SeedData::symmetric(a0, a1, xi, 1.0).unwrap();
        let tr = integrate(&seed, &params(gamma), 20.0, 1e-10, 1e-12).unwrap();
        prop_assert!(tr.blowup_time().is_none());
        prop_assert!(tr.energy_drift() <= 1e-8, "drift {}", tr.energy_drift());
    }

    #[test]
    fn states_strictly_increase_in_time(
        a1 in -2.0f64..2.0,
        xi in -2.0f64..2.0,
        b0 in -1.0f64..1.0,
    ) {
        let seed = SeedData::new(1.0, a1, xi, b0, 0.0, 1.0).unwrap();
        let tr = integrate(&seed, &params(2.0), 5.0, 1e-9, 1e-12).unwrap();
        prop_assert!(tr.states.windows(2).all(|w| w[1].t > w[0].t));
        prop_assert!(tr.states.iter().all(|s| s.a > 0.0));
    }
}
