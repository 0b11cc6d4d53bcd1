use std::f64::consts::PI;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sqfn_core::bessel::*;

fn g21(s: f64) -> f64 {
    (-s).exp() / 2.0
}

fn g23(s: f64) -> f64 {
    (-s).exp() / (4.0 * PI * s)
}

#[test]
fn closed_form_examples() {
    let v = bessel_eval(&BesselSpec::new(2.0, 1.0), 1.0).unwrap();
    assert!((v - 0.1839397).abs() < 1e-7);
    let v = bessel_eval(&BesselSpec::new(2.0, 3.0), 1.0).unwrap();
    // e^{-1}/(4π) = 0.0292750
    assert!((v - (-1.0f64).exp() / (4.0 * PI)).abs() < 1e-12);
    assert!(bessel_eval(&BesselSpec::new(2.0, 3.0), 5.0).unwrap() > 0.0);
}

#[test]
fn closed_forms_at_random_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let s1 = BesselSpec::new(2.0, 1.0);
    let s3 = BesselSpec::new(2.0, 3.0);
    for _ in 0..100 {
        let s = rng.gen_range(0.01..20.0);
        let a = bessel_eval(&s1, s).unwrap();
        let b = bessel_eval(&s3, s).unwrap();
        assert!((a / g21(s) - 1.0).abs() < 1e-8, "G_2^1({s}) = {a}");
        assert!((b / g23(s) - 1.0).abs() < 1e-8, "G_2^3({s}) = {b}");
    }
}

#[test]
fn log_eval_survives_underflow() {
    let spec = BesselSpec::new(2.0, 1.0);
    for s in [60.0, 400.0, 2000.0] {
        let l = bessel_log_eval(&spec, s).unwrap();
        assert!((l - (-s - 2f64.ln())).abs() < 1e-8 * s, "s = {s}: {l}");
    }
    assert_eq!(bessel_eval(&spec, 2000.0).unwrap(), 0.0);
}

#[test]
fn doubling_quadrature_points_is_self_consistent() {
    for (a, d) in [(1.0, 3.0), (2.0, 2.0), (3.0, 1.5), (4.0, 7.0)] {
        let base = BesselSpec::new(a, d);
        let fine = BesselSpec {
            quad_points: 2 * base.quad_points,
            ..base
        };
        for s in [0.02, 0.3, 1.0, 7.0, 30.0] {
            let x = bessel_eval(&base, s).unwrap();
            let y = bessel_eval(&fine, s).unwrap();
            assert!((x / y - 1.0).abs() <= base.quad_tol, "(a, d, s) = ({a}, {d}, {s})");
        }
    }
}

#[test]
fn envelope_examples() {
    let grid = log_grid(0.01, 20.0, 16);
    let fit = envelope_check(&BesselSpec::new(2.0, 3.0), &grid).unwrap();
    assert_eq!(fit.regime, Regime::ALessD);
    assert!((fit.c_upper - 1.0).abs() < 1e-6);
    assert!((fit.big_c_upper * 4.0 * PI - 1.0).abs() < 1e-6);
    assert_eq!(fit.max_violation, 0.0);

    let fit = envelope_check(&BesselSpec::new(2.0, 1.0), &grid).unwrap();
    assert_eq!(fit.regime, Regime::AGreaterD);
    assert!((fit.c_upper - 1.0).abs() < 1e-6);
    assert!((fit.big_c_upper - 0.5).abs() < 1e-6);
    assert_eq!(fit.max_violation, 0.0);

    let fit = envelope_check(&BesselSpec::new(2.0, 2.0), &log_grid(0.01, 1.0, 16)).unwrap();
    assert_eq!(fit.regime, Regime::AEqualD);
    assert!(fit.big_c_lower > 0.0 && fit.big_c_upper.is_finite());
    assert_eq!(fit.max_violation, 0.0);
}

#[test]
fn envelopes_hold_for_small_integer_pairs() {
    let grid = default_s_grid();
    for a in 1..=4 {
        for d in 1..=4 {
            let fit = envelope_check(&BesselSpec::new(a as f64, d as f64), &grid).unwrap();
            assert_eq!(fit.max_violation, 0.0, "(a, d) = ({a}, {d})");
            assert!(fit.c_lower >= fit.c_upper && fit.c_upper > 0.0);
        }
    }
}

#[test]
fn bad_inputs_are_rejected() {
    let spec = BesselSpec::new(2.0, 3.0);
    assert!(bessel_eval(&spec, 0.0).is_err());
    assert!(bessel_eval(&spec, -1.0).is_err());
    assert!(bessel_eval(&BesselSpec::new(0.0, 3.0), 1.0).is_err());
    let loose = BesselSpec {
        quad_tol: 1e-3,
        ..spec
    };
    assert!(bessel_eval(&loose, 1.0).is_err());
    let few = BesselSpec {
        quad_points: 16,
        ..spec
    };
    assert!(bessel_eval(&few, 1.0).is_err());
    assert!(envelope_check(&spec, &[]).is_err());
    assert!(envelope_check(&spec, &[2.0, 1.0]).is_err());
    assert!(envelope_check(&spec, &[1.0, 60.0]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn positive_and_strictly_decreasing(
        a in 0.5f64..6.0,
        d in 0.5f64..6.0,
        s in 0.01f64..20.0,
        step in 0.01f64..2.0,
    ) {
        let spec = BesselSpec::new(a, d);
        let x = bessel_eval(&spec, s).unwrap();
        let y = bessel_eval(&spec, s + step).unwrap();
        prop_assert!(x > 0.0 && y > 0.0);
        prop_assert!(y < x);
    }

    #[test]
    fn envelope_rates_are_ordered(a in 1.0f64..5.0, d in 1.0f64..5.0) {
        let fit = envelope_check(&BesselSpec::new(a, d), &default_s_grid()).unwrap();
        prop_assert!(fit.c_lower >= fit.c_upper && fit.c_upper > 0.0);
        prop_assert!(fit.big_c_lower <= fit.big_c_upper);
        prop_assert_eq!(fit.max_violation, 0.0);
    }
}
