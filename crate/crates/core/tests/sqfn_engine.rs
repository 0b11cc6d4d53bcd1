use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sqfn_core::radial_model::*;
use sqfn_core::solver::{shifted_apply, StarFactor, SOLVE_TOL};
use sqfn_core::sqfn_engine::*;

fn model() -> ModelManifold {
    build_model(&[EndProfile::new(3, 1e4, 32), EndProfile::new(4, 1e4, 32)]).unwrap()
}

fn random_function(m: &ModelManifold, seed: u64) -> RadialFunction {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vals = (0..m.node_count())
        .map(|v| {
            let r = m.radius(v).max(1.0);
            rng.gen_range(-1.0..1.0) * r.powf(-1.5)
        })
        .collect();
    RadialFunction::new(vals, "f")
}

fn bump(m: &ModelManifold) -> RadialFunction {
    let vals = (0..m.node_count())
        .map(|v| {
            let x = m.radius(v).max(1.0).ln();
            (-(x - 2.0).powi(2)).exp()
        })
        .collect();
    RadialFunction::new(vals, "bump")
}

fn supported_noise(m: &ModelManifold, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..m.node_count())
        .map(|v| {
            let r = m.radius(v);
            if v > 0 && r <= 100.0 {
                rng.gen_range(-1.0..1.0)
            } else {
                0.0
            }
        })
        .collect()
}

#[test]
fn resolvent_stage_residuals() {
    let m = model();
    let f = random_function(&m, 3);
    for k in [1e-3, 0.1, 1.0, 30.0] {
        for order in 1..=3 {
            let (_, rep) = resolvent_apply(&m, k, order, &f).unwrap();
            assert!(rep.residual <= SOLVE_TOL, "k {k}, M {order}: {}", rep.residual);
            assert_eq!(rep.order, order);
            assert_eq!(rep.factorization_reused, order > 1);
        }
    }
    assert!(resolvent_apply(&m, 0.0, 1, &f).is_err());
    assert!(resolvent_apply(&m, 1.0, 0, &f).is_err());
}

#[test]
fn resolvent_round_trip() {
    let m = model();
    let f = random_function(&m, 3);
    let mut cases: Vec<(f64, u32)> = [1e-3, 1e-2, 0.1].iter().map(|&k| (k, 1)).collect();
    for k in [1.0, 3.0, 30.0] {
        cases.extend((1..=3).map(|o| (k, o)));
    }
    for (k, order) in cases {
        let (u, rep) = resolvent_apply(&m, k, order, &f).unwrap();
        let mut back = u.values.clone();
        for _ in 0..order {
            back = shifted_apply(&m, k, &back);
        }
        let diff: Vec<f64> = back.iter().zip(&f.values).map(|(a, b)| a - b).collect();
        let res = lp_norm(&m, &diff, 2.0) / lp_norm(&m, &f.values, 2.0);
        assert!(res <= 1e-9, "k {k}, M {order}: {res}");
        assert!((rep.round_trip - res).abs() <= 1e-12);
    }
}

#[test]
fn resolvent_of_large_k_scales_like_k_power() {
    let m = model();
    let f = bump(&m);
    let k = 1e4;
    for order in 1..=2 {
        let (u, _) = resolvent_apply(&m, k, order, &f).unwrap();
        let ratio = lp_norm(&m, &u.values, 2.0) / lp_norm(&m, &f.values, 2.0) * k.powi(2 * order as i32);
        assert!((ratio - 1.0).abs() < 1e-3, "M {order}: {ratio}");
    }
}

#[test]
fn l2_constants_on_random_functions() {
    let m = model();
    let eng = SqfnEngine::new(&m, SpectralGrid::for_model(&m, 32).unwrap()).unwrap();
    let cases = [
        (Kind::Vertical, 1),
        (Kind::Vertical, 2),
        (Kind::Horizontal, 2),
        (Kind::Horizontal, 3),
    ];
    for seed in 0..20 {
        let f = supported_noise(&m, seed);
        let fn2 = m.inner(&f, &f);
        for (kind, order) in cases {
            let field = eng.field(kind, order, &f, Range::Full).unwrap();
            let want = match kind {
                Kind::Vertical => vertical_l2_constant(order),
                Kind::Horizontal => horizontal_l2_constant(order),
            };
            let got = field.l2_squared(&m) / fn2;
            assert!((got / want - 1.0).abs() < 0.02, "seed {seed}, {kind:?} M={order}: {got} vs {want}");
        }
    }
}

#[test]
fn l2_constant_values() {
    assert_eq!(vertical_l2_constant(1), 0.5);
    assert!((vertical_l2_constant(2) - 1.0 / 6.0).abs() < 1e-15);
    assert!((horizontal_l2_constant(2) - 1.0 / 12.0).abs() < 1e-15);
    assert!((horizontal_l2_constant(3) - 1.0 / 40.0).abs() < 1e-15);
}

#[test]
fn identity_residuals_are_small() {
    let m = model();
    let eng = SqfnEngine::new(&m, SpectralGrid::for_model(&m, 32).unwrap()).unwrap();
    let f = bump(&m);
    for order in 1..=3 {
        assert!(eng.resolution_identity_residual(order, &f.values, Kind::Vertical).unwrap() <= 0.02);
    }
    for order in 2..=3 {
        assert!(eng.resolution_identity_residual(order, &f.values, Kind::Horizontal).unwrap() <= 0.02);
    }
}

#[test]
fn low_and_high_add_up() {
    let m = model();
    let eng = SqfnEngine::new(&m, SpectralGrid::for_model(&m, 32).unwrap()).unwrap();
    let f = random_function(&m, 9);
    for (kind, order) in [(Kind::Vertical, 1), (Kind::Vertical, 2), (Kind::Horizontal, 2)] {
        let lo = eng.field(kind, order, &f.values, Range::Low).unwrap();
        let hi = eng.field(kind, order, &f.values, Range::High).unwrap();
        let full = eng.field(kind, order, &f.values, Range::Full).unwrap();
        for ((a, b), c) in lo.density.iter().zip(&hi.density).zip(&full.density) {
            assert!((a + b - c).abs() <= 1e-12 * c.abs().max(1e-300), "{kind:?} M={order}");
        }
    }
}

#[test]
fn spectral_refinement_is_stable() {
    let m = model();
    let f = bump(&m);
    let a = SqfnEngine::new(&m, SpectralGrid::for_model(&m, 32).unwrap()).unwrap();
    let b = SqfnEngine::new(&m, SpectralGrid::for_model(&m, 64).unwrap()).unwrap();
    for order in 1..=2 {
        let x = a.field(Kind::Vertical, order, &f.values, Range::Full).unwrap().l2_squared(&m);
        let y = b.field(Kind::Vertical, order, &f.values, Range::Full).unwrap().l2_squared(&m);
        assert!((x / y - 1.0).abs() < 0.005, "M={order}: {x} vs {y}");
    }
}

#[test]
fn lp_norm_examples() {
    let m = model();
    let ones = vec![1.0; m.node_count()];
    let total: f64 = m.measure.iter().sum();
    assert!((lp_norm(&m, &ones, 2.0) - total.sqrt()).abs() < 1e-12 * total.sqrt());
    assert!((lp_norm(&m, &ones, 3.0) - total.cbrt()).abs() < 1e-12 * total.cbrt());
    let mut spike = vec![0.0; m.node_count()];
    spike[7] = -4.0;
    assert_eq!(lp_norm(&m, &spike, f64::INFINITY), 4.0);
    assert!((lp_norm(&m, &spike, 1.0) - 4.0 * m.measure[7]).abs() < 1e-15);
}

#[test]
fn gradient_examples() {
    let m = model();
    let ones = vec![1.0; m.node_count()];
    let g = grad_apply(&m, &ones);
    for (e, v) in m.edges.iter().zip(&g.values) {
        match e.outer {
            Some(_) => assert_eq!(*v, 0.0),
            None => assert!((v + 1.0 / e.h).abs() < 1e-15),
        }
    }
    let lin: Vec<f64> = (0..m.node_count()).map(|v| m.radius(v)).collect();
    let g = grad_apply(&m, &lin);
    for (e, v) in m.edges.iter().zip(&g.values) {
        // the hub edge starts from a virtual radius
        if e.outer.is_some() && e.inner != 0 {
            assert!((v - 1.0).abs() < 1e-9, "{v}");
        }
    }
}

#[test]
fn edge_to_node_preserves_mass() {
    let m = model();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x: Vec<f64> = m.edges.iter().map(|_| rng.gen_range(0.0..1.0)).collect();
    let nodes = edge_to_node(&m, &x);
    let a: f64 = m.measure.iter().zip(&nodes).map(|(mu, v)| mu * v).sum();
    let b: f64 = m.edges.iter().zip(&x).map(|(e, v)| e.measure() * v).sum();
    assert!((a - b).abs() <= 1e-12 * b);
}

#[test]
fn zero_maps_to_zero() {
    let m = model();
    let eng = SqfnEngine::new(&m, SpectralGrid::for_model(&m, 32).unwrap()).unwrap();
    let z = RadialFunction::new(vec![0.0; m.node_count()], "0");
    for range in [Range::Low, Range::High, Range::Full] {
        assert!(eng.vertical_sqfn(1, &z, range).unwrap().values.iter().all(|&v| v == 0.0));
        assert!(eng.horizontal_sqfn(2, &z, range).unwrap().values.iter().all(|&v| v == 0.0));
    }
}

#[test]
fn invalid_orders_are_rejected() {
    let m = model();
    let eng = SqfnEngine::new(&m, SpectralGrid::for_model(&m, 32).unwrap()).unwrap();
    let f = bump(&m);
    assert!(eng.horizontal_sqfn(1, &f, Range::Full).is_err());
    assert!(eng.vertical_sqfn(0, &f, Range::Full).is_err());
    assert!(Range::parse("mid").is_err());
    assert!(Kind::parse("diagonal").is_err());
    assert_eq!(Range::parse("low").unwrap(), Range::Low);
    assert_eq!(Kind::parse("horizontal").unwrap(), Kind::Horizontal);
}

#[test]
fn grid_construction() {
    let g = SpectralGrid::new(1e-3, 1e3, 16).unwrap();
    assert!(g.nodes.contains(&1.0));
    assert!(g.nodes.windows(2).all(|w| w[0] < w[1]));
    assert!(SpectralGrid::new(1.0, 1e-3, 16).is_err());
    // ∫ dk/k over [k_lo, 1] and [1, k_hi]
    let lo = g.integrate(Range::Low, |k| 1.0 / k);
    let hi = g.integrate(Range::High, |k| 1.0 / k);
    assert!((lo - 1e3f64.ln()).abs() < 1e-9 && (hi - 1e3f64.ln()).abs() < 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn resolvent_powers_are_monotone_in_order(
        k in 1.0f64..20.0,
        seed in 0u64..1000,
    ) {
        let m = model();
        let f = random_function(&m, seed);
        let fac = StarFactor::new(&m, k).unwrap();
        let mut prev = lp_norm(&m, &f.values, 2.0);
        for order in 1..=3 {
            let u = fac.resolvent_power(&m, order, &f.values);
            let n = lp_norm(&m, &u, 2.0);
            prop_assert!(n <= prev * (1.0 + 1e-12));
            prev = n;
        }
    }

    #[test]
    fn summation_by_parts(seed in 0u64..1000) {
        let m = model();
        let f = random_function(&m, seed);
        let g = random_function(&m, seed + 1);
        let lhs = m.inner(&m.laplacian_apply(&f.values), &g.values);
        let gf = grad_apply(&m, &f.values);
        let gg = grad_apply(&m, &g.values);
        let rhs: f64 = m.edges.iter().zip(gf.values.iter().zip(&gg.values)).map(|(e, (a, b))| e.measure() * a * b).sum();
        let scale: f64 = m.edges.iter().zip(gf.values.iter().zip(&gg.values)).map(|(e, (a, b))| (e.measure() * a * b).abs()).sum();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * scale);
    }
}
