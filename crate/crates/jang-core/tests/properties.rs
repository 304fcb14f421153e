//! Randomized invariant checks for the numerical substrate and the solvers.

use std::f64::consts::PI;

use jang_core::barriers::{assemble_barriers, BarrierSide};
use jang_core::fitting::{fit_decay_tail, DecayModel};
use jang_core::geometry::{christoffel_symbols, Point, RadialGrid, SphereGrid};
use jang_core::graph::{adm_mass, RadialGraph};
use jang_core::harmonics::{solve_sphere_poisson, HarmonicCoeffs};
use jang_core::initial_data::{make_wang_data, SphereTensorField, WangDataSpec};
use jang_core::jang::jang_residual;
use nalgebra::{Matrix3, Vector3};
use proptest::prelude::*;

fn wang_point() -> impl Strategy<Value = (WangDataSpec, Point)> {
    (
        -0.5..0.5f64,
        -0.5..0.5f64,
        2.0..50.0f64,
        0.2..(PI - 0.2),
        0.0..(2.0 * PI),
    )
        .prop_map(|(a, b, r, theta, phi)| {
            let mut m = SphereTensorField::round(2, 1.0);
            m.c11.set(2, 0, a);
            m.c22.set(2, 0, a);
            m.c12.set(2, 1, b);
            let spec = WangDataSpec::new(m, SphereTensorField::zero(2));
            (spec, Point::new(r, theta, phi))
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn christoffel_symbols_are_symmetric((spec, pt) in wang_point()) {
        let data = make_wang_data(&spec).unwrap();
        let jet = data.metric_jet(pt);
        let gamma = christoffel_symbols(&jet.g, &jet.dg).unwrap();
        for k in 0..3 {
            for i in 0..3 {
                for j in 0..3 {
                    let d = (gamma[k][(i, j)] - gamma[k][(j, i)]).abs();
                    prop_assert!(d < 1e-12, "Γ^{k}_{i}{j} asymmetry {d:.3e}");
                }
            }
        }
    }

    #[test]
    fn sphere_poisson_round_trip(c20 in -1.0..1.0f64, c21 in -1.0..1.0f64, c1m1 in -1.0..1.0f64) {
        let mut rhs = HarmonicCoeffs::zero(3);
        rhs.set(2, 0, c20);
        rhs.set(2, 1, c21);
        rhs.set(1, -1, c1m1);
        let psi = solve_sphere_poisson(&rhs).unwrap();
        let back = psi.laplacian();
        for l in 1..=3usize {
            for m in -(l as i64)..=(l as i64) {
                prop_assert!((back.get(l, m) - rhs.get(l, m)).abs() < 1e-12);
            }
        }
        prop_assert!(psi.mean().abs() < 1e-12);
    }

    #[test]
    fn tail_fit_recovers_planted_decay(c in 0.1..5.0f64, p in 0.5..5.0f64, sign in prop::bool::ANY) {
        let grid = RadialGrid::logarithmic(10.0, 1e3, 40).unwrap();
        let s = if sign { 1.0 } else { -1.0 };
        let ys: Vec<f64> = grid.nodes().iter().map(|&r| s * c * r.powf(-p)).collect();
        let fit = fit_decay_tail(grid.nodes(), &ys, DecayModel::Power).unwrap();
        prop_assert!((fit.c - s * c).abs() < 1e-8 * c);
        prop_assert!((fit.p - p).abs() < 1e-8);
    }

    #[test]
    fn rank_one_metric_inverse_is_exact(
        fr in -3.0..3.0f64, ft in -2.0..2.0f64, fp in -2.0..2.0f64,
        r in 1.0..100.0f64, theta in 0.3..2.8f64,
    ) {
        // polar-chart hyperbolic base metric with an arbitrary df ⊗ df update
        let g = Matrix3::from_diagonal(&Vector3::new(
            1.0 / (1.0 + r * r),
            r * r,
            r * r * theta.sin().powi(2),
        ));
        let df = Vector3::new(fr, ft, fp);
        let ginv = g.try_inverse().unwrap();
        let fup = ginv * df;
        let w2 = 1.0 + df.dot(&fup);
        let gbar = g + df * df.transpose();
        let gbar_inv = ginv - fup * fup.transpose() / w2;
        let defect = (gbar_inv * gbar - Matrix3::identity()).norm();
        prop_assert!(defect < 1e-11 * gbar.norm().max(1.0), "defect {defect:.3e}");
    }

    #[test]
    fn jang_operator_ignores_vertical_translation(shift in -5.0..5.0f64) {
        let spec = WangDataSpec::m_sigma(2);
        let data = make_wang_data(&spec).unwrap();
        let grid = RadialGrid::logarithmic(2.0, 50.0, 60).unwrap();
        let f: Vec<f64> = grid.nodes().iter().map(|&r| (1.0 + r * r).sqrt()).collect();
        let g: Vec<f64> = f.iter().map(|&v| v + shift).collect();
        let r0 = jang_residual(&f, &data, &grid, 0.0).unwrap();
        let r1 = jang_residual(&g, &data, &grid, 0.0).unwrap();
        for (a, b) in r0.iter().zip(&r1) {
            prop_assert!((a - b).abs() < 1e-9, "residual shifted by {:.3e}", a - b);
        }
    }

    #[test]
    fn adm_mass_is_invariant_under_vertical_translation(
        alpha in 0.0..1.0f64, shift in -20.0..20.0f64,
    ) {
        let spec = WangDataSpec::m_sigma(2);
        let data = make_wang_data(&spec).unwrap();
        let grid = RadialGrid::logarithmic(1e2, 1e4, 16).unwrap();
        let sphere = SphereGrid::new(2);
        let radii = grid.nodes().to_vec();
        let psi = HarmonicCoeffs::zero(2);
        let base = RadialGraph::jang_ansatz(&data, &grid, alpha, &psi);
        let profile = move |r: f64| {
            let v = 1.0 + r * r;
            (
                v.sqrt() + alpha * r.ln() + shift,
                r / v.sqrt() + alpha / r,
                v.powf(-1.5) - alpha / (r * r),
            )
        };
        let shifted = RadialGraph::new(&data, &grid, Box::new(profile), &psi);
        let t1 = adm_mass(|r, t, p| base.metric_field(r, t, p), &radii, &sphere).unwrap();
        let t2 = adm_mass(|r, t, p| shifted.metric_field(r, t, p), &radii, &sphere).unwrap();
        prop_assert_eq!(t1.mass, t2.mass);
    }
}

proptest! {
    // barrier assembly is comparatively expensive; fewer cases
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn barriers_are_subunit_and_ordered(a in 0.0..0.3f64) {
        let mut m = SphereTensorField::round(2, 1.0);
        m.c11.set(2, 0, a);
        m.c22.set(2, 0, a);
        let spec = WangDataSpec::new(m, SphereTensorField::zero(2));
        let barriers = assemble_barriers(&spec, 2.0, 1e4, 16).unwrap();
        let n = barriers.grid().len();
        for i in 0..n {
            prop_assert!(barriers.k_plus()[i].abs() <= 1.0 + 1e-12);
            prop_assert!(
                barriers.f_gap(i) >= -1e-9,
                "ordering violated by {:.3e} at node {i}",
                -barriers.f_gap(i)
            );
            prop_assert!(
                barriers.phi(BarrierSide::Upper, i) >= barriers.phi(BarrierSide::Lower, i) - 1e-9
            );
        }
    }
}
