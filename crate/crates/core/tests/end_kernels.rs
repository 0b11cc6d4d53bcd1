use std::f64::consts::PI;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sqfn_core::end_kernels::*;

fn pt(sep: f64) -> KernelPoint {
    KernelPoint::euclidean(sep)
}

fn rel(a: f64, b: f64) -> f64 {
    (a / b - 1.0).abs()
}

/// `(Δ + k²)^{-j}` on ℝ¹ and ℝ³ for `j ∈ {1, 2}`.
fn closed_form(dim: usize, j: u32, k: f64, r: f64) -> f64 {
    let e = (-k * r).exp();
    match (dim, j) {
        (1, 1) => e / (2.0 * k),
        (1, 2) => e * (1.0 + k * r) / (4.0 * k.powi(3)),
        (3, 1) => e / (4.0 * PI * r),
        (3, 2) => e / (8.0 * PI * k),
        _ => unreachable!(),
    }
}

#[test]
fn spec_examples() {
    let e1 = EndGeometry::euclidean(1);
    let e3 = EndGeometry::euclidean(3);
    let v = end_resolvent(&e1, 1, 0.5, &pt(2.0)).unwrap();
    assert!(rel(v, (-1.0f64).exp()) < 1e-10);
    let v = end_resolvent(&e3, 1, 1.0, &pt(1.0)).unwrap();
    assert!(rel(v, (-1.0f64).exp() / (4.0 * PI)) < 1e-10);
    let v = end_resolvent(&e1, 2, 1.0, &pt(1.0)).unwrap();
    assert!(rel(v, (-1.0f64).exp() / 2.0) < 1e-10);

    let g = end_resolvent_grad(&e1, 1, 1.0, &pt(2.0)).unwrap();
    assert!(rel(g, (-2.0f64).exp() / 2.0) < 1e-10);
    // e^{-kr}(kr + 1)/(4πr²) at k = r = 1
    let g = end_resolvent_grad(&e3, 1, 1.0, &pt(1.0)).unwrap();
    assert!(rel(g, 2.0 * (-1.0f64).exp() / (4.0 * PI)) < 1e-10);
}

#[test]
fn subordination_matches_closed_forms() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let k = 10f64.powf(rng.gen_range(-2.0..1.0));
        let r = 10f64.powf(rng.gen_range(-2.0..1.3));
        for dim in [1, 3] {
            let geom = EndGeometry::euclidean(dim);
            for j in [1, 2] {
                let v = end_resolvent(&geom, j, k, &pt(r)).unwrap();
                let want = closed_form(dim, j, k, r);
                assert!(rel(v, want) < 1e-8, "dim {dim}, j {j}, k {k}, r {r}: {v} vs {want}");
            }
        }
    }
}

#[test]
fn gradient_matches_finite_differences() {
    let cases = [
        (EndGeometry::euclidean(3), 1, 0.7, 2.0),
        (EndGeometry::euclidean(4), 2, 0.3, 5.0),
        (EndGeometry::with_torus(3, vec![2.0 * PI]), 1, 0.5, 1.5),
    ];
    for (geom, j, k, sep) in cases {
        let h = 1e-4 * sep;
        let mut lo = pt(sep - h);
        let mut hi = pt(sep + h);
        lo.torus_seps = vec![0.0; geom.m];
        hi.torus_seps = vec![0.0; geom.m];
        let fd = (end_resolvent(&geom, j, k, &lo).unwrap() - end_resolvent(&geom, j, k, &hi).unwrap()) / (2.0 * h);
        let mut mid = pt(sep);
        mid.torus_seps = vec![0.0; geom.m];
        let g = end_resolvent_grad(&geom, j, k, &mid).unwrap();
        assert!(rel(g, fd) < 1e-6, "{geom:?} j {j}: {g} vs {fd}");
    }
}

#[test]
fn large_torus_approaches_free_kernel() {
    let (k, sep) = (0.2, 1.0);
    let free = free_resolvent(4, 1, k, sep).unwrap();
    let mut last = f64::INFINITY;
    for l in [10.0, 20.0, 40.0] {
        let geom = EndGeometry::with_torus(3, vec![l]);
        let p = KernelPoint {
            euclid_sep: sep,
            torus_seps: vec![0.0],
        };
        let err = rel(end_resolvent(&geom, 1, k, &p).unwrap(), free);
        assert!(err < last, "L = {l}: error {err} did not decrease from {last}");
        last = err;
    }
    assert!(last < 1e-2);
}

#[test]
fn k_squared_derivative_identity() {
    let geom = EndGeometry::with_torus(3, vec![2.0 * PI]);
    for (j, k, sep) in [(1, 0.5, 1.0), (2, 1.0, 2.0), (1, 2.0, 0.5)] {
        let p = KernelPoint {
            euclid_sep: sep,
            torus_seps: vec![1.0],
        };
        let k2 = k * k;
        let dk2 = 1e-4 * k2;
        let at = |s: f64| end_resolvent(&geom, j, s.sqrt(), &p).unwrap();
        let deriv = -(at(k2 + dk2) - at(k2 - dk2)) / (2.0 * dk2);
        let next = j as f64 * end_resolvent(&geom, j + 1, k, &p).unwrap();
        assert!(rel(deriv, next) < 1e-5, "j {j}, k {k}: {deriv} vs {next}");
    }
}

#[test]
fn image_and_mode_sums_agree() {
    // kL ~ 1 and r/L ~ 0.3: both lattice sums converge here, so a fine k
    // step around the switch must not jump
    let geom = EndGeometry::with_torus(3, vec![2.0 * PI]);
    let p = KernelPoint {
        euclid_sep: 2.0,
        torus_seps: vec![1.0],
    };
    let switch = 2.0 * PI * p.euclid_sep / (2.0 * PI) / (2.0 * PI);
    let below = end_resolvent(&geom, 1, switch * (1.0 - 1e-14), &p).unwrap();
    let above = end_resolvent(&geom, 1, switch * (1.0 + 1e-14), &p).unwrap();
    assert!(rel(below, above) < 1e-10, "{below} vs {above}");
    let gb = end_resolvent_grad(&geom, 1, switch * (1.0 - 1e-14), &p).unwrap();
    let ga = end_resolvent_grad(&geom, 1, switch * (1.0 + 1e-14), &p).unwrap();
    assert!(rel(gb, ga) < 1e-10, "{gb} vs {ga}");
}

#[test]
fn torus_kernel_matches_closed_form_modes() {
    // ℝ³ × S¹ of circumference 2π: (2π)^{-1} Σ_ν cos(νθ) e^{-κ_ν r}/(4πr), κ_ν = √(k² + ν²)
    let geom = EndGeometry::with_torus(3, vec![2.0 * PI]);
    for (k, r, th) in [(1e-3, 0.1, PI), (0.3, 2.0, 1.0), (2.0, 0.5, 0.0), (0.05, 5.0, 2.0)] {
        let want: f64 = (0..4000)
            .map(|n| {
                let kn = (k * k + (n * n) as f64).sqrt();
                let w = if n == 0 { 1.0 } else { 2.0 };
                w * (n as f64 * th).cos() * (-kn * r).exp() / (4.0 * PI * r)
            })
            .sum::<f64>()
            / (2.0 * PI);
        let p = KernelPoint {
            euclid_sep: r,
            torus_seps: vec![th],
        };
        let got = end_resolvent(&geom, 1, k, &p).unwrap();
        assert!(rel(got, want) < 1e-9, "k {k}, r {r}, θ {th}: {got} vs {want}");
    }
}

#[test]
fn small_mass_on_a_torus_converges() {
    let geom = EndGeometry::with_torus(3, vec![2.0 * PI]);
    let p = KernelPoint {
        euclid_sep: 0.1,
        torus_seps: vec![PI],
    };
    let v = end_resolvent(&geom, 1, 1e-3, &p).unwrap();
    // far below the torus scale the kernel is the ℝ^4 one
    let free = free_resolvent(4, 1, 1e-3, p.geodesic_dist()).unwrap();
    assert!(v > 0.0 && v.is_finite());
    let g = end_resolvent_grad(&geom, 1, 1e-3, &p).unwrap();
    assert!(g > 0.0 && g.is_finite());
    assert!(v > 0.5 * free, "{v} vs {free}");
}

#[test]
fn diagonal_and_domain_errors() {
    let e3 = EndGeometry::euclidean(3);
    assert!(end_resolvent(&e3, 1, 1.0, &pt(0.0)).is_err());
    assert!(end_resolvent_grad(&e3, 2, 1.0, &pt(0.0)).is_err());
    let torus = EndGeometry::with_torus(2, vec![1.0]);
    let outside = KernelPoint {
        euclid_sep: 1.0,
        torus_seps: vec![0.6],
    };
    assert!(end_resolvent(&torus, 1, 1.0, &outside).is_err());
    assert!(EndGeometry::with_torus(2, vec![-1.0]).validate().is_err());
    assert!(EndGeometry::euclidean(0).validate().is_err());
}

#[test]
fn bound_examples() {
    let e3 = EndGeometry::euclidean(3);
    let seps: Vec<KernelPoint> = sqfn_core::bessel::log_grid(0.1, 20.0, 8).into_iter().map(pt).collect();
    let low_k = sqfn_core::bessel::log_grid(1e-3, 1.0, 6);
    let rep = check_bounds(&e3, 1, BoundId::ResolventLower, &low_k, &seps).unwrap();
    assert!(rep.pass, "{rep:?}");
    assert!((rep.fitted_rate - 1.0).abs() < 1e-3);
    assert!(rel(rep.fitted_constant, 1.0 / (4.0 * PI)) < 1e-3);

    let e1 = EndGeometry::euclidean(1);
    let rep = check_bounds(&e1, 1, BoundId::Resolvent, &low_k, &seps).unwrap();
    assert!(rep.pass, "{rep:?}");
    assert!(rel(rep.fitted_constant, 0.5) < 1e-3, "{}", rep.fitted_constant);

    let torus = EndGeometry::with_torus(3, vec![2.0 * PI]);
    let rep = check_bounds(
        &torus,
        1,
        BoundId::ProductKernel,
        &default_k_grid(BoundId::ProductKernel),
        &default_point_grid(&torus),
    )
    .unwrap();
    assert!(rep.pass, "{rep:?}");
    assert!(rep.fitted_constant.is_finite() && rep.fitted_constant > 0.0);
}

#[test]
fn every_bound_passes_on_a_torus_end() {
    let geom = EndGeometry::with_torus(3, vec![2.0 * PI]);
    let pts = default_point_grid(&geom);
    for id in BoundId::ALL {
        // the logarithmic cases exist only for 2j or 2j - 1 in {n, N} = {3, 4}
        let j = if matches!(id, BoundId::ResolventLog | BoundId::GradLog) { 2 } else { 1 };
        let rep = check_bounds(&geom, j, id, &default_k_grid(id), &pts).unwrap();
        assert!(rep.pass, "{}: {rep:?}", id.name());
    }
}

#[test]
fn low_energy_bounds_reject_large_k() {
    let e3 = EndGeometry::euclidean(3);
    assert!(check_bounds(&e3, 1, BoundId::ResolventLower, &[0.5, 2.0], &[pt(1.0)]).is_err());
    assert!(check_bounds(&e3, 1, BoundId::Resolvent, &[], &[pt(1.0)]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn kernel_depends_only_on_separations(
        sep in 0.1f64..5.0,
        t in 0.0f64..3.0,
        k in 0.1f64..3.0,
    ) {
        let geom = EndGeometry::with_torus(3, vec![2.0 * PI]);
        let a = KernelPoint { euclid_sep: sep, torus_seps: vec![t] };
        // the same separation reached from the other side of the circle
        let b = KernelPoint { euclid_sep: sep, torus_seps: vec![(2.0 * PI - t).min(t)] };
        let va = end_resolvent(&geom, 1, k, &a).unwrap();
        let vb = end_resolvent(&geom, 1, k, &b).unwrap();
        prop_assert!(rel(va, vb) < 1e-12);
        prop_assert!(a.geodesic_dist() >= a.euclid_sep);
    }

    #[test]
    fn kernel_decays_with_separation(sep in 0.2f64..10.0, k in 0.1f64..3.0) {
        let geom = EndGeometry::euclidean(3);
        let near = end_resolvent(&geom, 1, k, &pt(sep)).unwrap();
        let far = end_resolvent(&geom, 1, k, &pt(1.5 * sep)).unwrap();
        prop_assert!(far < near);
    }
}
