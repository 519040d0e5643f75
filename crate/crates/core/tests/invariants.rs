use std::f64::consts::PI;

use deltashell_core::boundary_ops::{assemble_single_layer, mode_weyl_circle, mode_weyl_sphere, sym_eigen_desc, Geometry};
use deltashell_core::bs_solver::{find_bound_states_default, count_bound_states, InteractionSpec};
use deltashell_core::geometry::{build_grid, ClosedCurve};
use deltashell_core::kernels::{green_2d, green_3d, SpectralPoint};
use deltashell_core::krein_schatten::{krein_factors, DifferenceKind, FitRange, SingularValueProfile, VolumeGrid};
use deltashell_core::op_algebra::{conjugation_identity_residual, random_pair, telescoping_residual, C64};
use deltashell_core::specfun::bessel_ik;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bessel_recurrences(l in 1u32..=50, x in 0.1f64..50.0) {
        let (lo, mid, hi) = (bessel_ik(l - 1, x).unwrap(), bessel_ik(l, x).unwrap(), bessel_ik(l + 1, x).unwrap());
        let ri = (lo.i - hi.i) / (2.0 * l as f64 / x * mid.i);
        let rk = (hi.k - lo.k) / (2.0 * l as f64 / x * mid.k);
        prop_assert!((ri - 1.0).abs() < 1e-11, "I: {ri}");
        prop_assert!((rk - 1.0).abs() < 1e-11, "K: {rk}");
    }

    #[test]
    fn bessel_monotone(l in 0u32..=40, x in 0.1f64..40.0, dx in 0.01f64..2.0) {
        let (a, b) = (bessel_ik(l, x).unwrap(), bessel_ik(l, x + dx).unwrap());
        prop_assert!(b.i > a.i);
        prop_assert!(b.k < a.k);
    }

    #[test]
    fn green_positive_and_decaying(kappa in 0.1f64..5.0, r in 1.0f64..20.0, theta in 0.0f64..6.28) {
        let x = [r * theta.cos(), r * theta.sin()];
        let g2 = green_2d(x, [0.0, 0.0], kappa).unwrap();
        let c2 = green_2d([1.0, 0.0], [0.0, 0.0], kappa).unwrap() * (0.5 * kappa).exp();
        prop_assert!(g2 > 0.0 && g2 <= c2 * (-0.5 * kappa * r).exp() * (1.0 + 1e-12));
        let g3 = green_3d([x[0], x[1], 0.0], [0.0; 3], kappa).unwrap();
        let c3 = green_3d([1.0, 0.0, 0.0], [0.0; 3], kappa).unwrap() * (0.5 * kappa).exp();
        prop_assert!(g3 > 0.0 && g3 <= c3 * (-0.5 * kappa * r).exp() * (1.0 + 1e-12));
    }

    #[test]
    fn mode_values_decrease_in_kappa(l in 0u32..=60, k in 0.05f64..8.0, f in 1.01f64..3.0, r in 0.5f64..2.0) {
        for (a, b) in [
            (mode_weyl_circle(l, k, r).unwrap(), mode_weyl_circle(l, k * f, r).unwrap()),
            (mode_weyl_sphere(l, k, r).unwrap(), mode_weyl_sphere(l, k * f, r).unwrap()),
        ] {
            prop_assert!(b.m_tilde < a.m_tilde);
            prop_assert!(b.m_hat < a.m_hat);
        }
    }

    #[test]
    fn ellipse_normals_point_outward(a in 0.5f64..3.0, b in 0.5f64..3.0) {
        let g = build_grid(ClosedCurve::ellipse(a, b), 64).unwrap();
        let c = g.centroid();
        for (p, n) in g.points.iter().zip(&g.normals) {
            prop_assert!(n[0] * (p[0] - c[0]) + n[1] * (p[1] - c[1]) > 0.0);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn krein_difference_symmetric_with_rank_bound(alpha in 0.2f64..4.0, lambda in -4.0f64..-0.3) {
        let geometry = Geometry::Curve { curve: ClosedCurve::kite(), nodes: 24 };
        let vol = VolumeGrid::new(2.5, 12).unwrap();
        let p = SpectralPoint::from_lambda(lambda).unwrap();
        match krein_factors(p, &InteractionSpec::delta(alpha), &geometry, &vol, DifferenceKind::DeltaVsFree) {
            Ok(f) => {
                let d = f.to_dense();
                prop_assert!((&d - d.transpose()).norm() <= 1e-10 * d.norm());
                let mut s: Vec<f64> = d.singular_values().iter().copied().collect();
                s.sort_by(|a, b| b.total_cmp(a));
                prop_assert!(s[24..].iter().all(|v| *v <= 1e3 * f64::EPSILON * s[0]));
            }
            Err(deltashell_core::Error::NearEigenvalue { .. }) => {}
            Err(e) => prop_assert!(false, "{e}"),
        }
    }

    #[test]
    fn zero_strength_never_binds(kind in 0usize..4, nodes in prop::sample::select(vec![16usize, 32])) {
        let geometry = match kind {
            0 => Geometry::Curve { curve: ClosedCurve::kite(), nodes },
            1 => Geometry::Curve { curve: ClosedCurve::ellipse(2.0, 1.0), nodes },
            2 => Geometry::CircleModes { radius: 1.3, max_order: 16 },
            _ => Geometry::SphereModes { radius: 0.8, max_order: 16 },
        };
        prop_assert!(find_bound_states_default(&InteractionSpec::delta(0.0), &geometry, 1e-8).unwrap().is_empty());
    }

    #[test]
    fn algebra_identities_any_seed(seed in any::<u64>()) {
        let pair = random_pair(seed, 12).unwrap();
        prop_assert!(conjugation_identity_residual(&pair, pair.lambda0 + C64::new(0.3, 0.8)).unwrap() < 1e-11);
        for m in 1..=6 {
            prop_assert!(telescoping_residual(&pair, C64::new(-1.7, -0.4), m).unwrap() < 1e-10);
        }
    }
}

#[test]
fn perimeter_quadrature_converges_super_algebraically() {
    for curve in [ClosedCurve::circle(1.0), ClosedCurve::ellipse(2.0, 1.0), ClosedCurve::kite()] {
        let exact = build_grid(curve, 1024).unwrap().perimeter();
        let err: Vec<f64> = [16, 32, 64].iter().map(|&n| (build_grid(curve, n).unwrap().perimeter() - exact).abs()).collect();
        let ratios: Vec<f64> = err.windows(2).filter(|w| w[0] > 1e-13 * exact).map(|w| w[1] / w[0]).collect();
        assert!(ratios.windows(2).all(|r| r[1] < r[0]), "{curve:?}: {err:?}");
        if let Some(last) = ratios.last() {
            assert!(*last < 1e-2, "{curve:?}: {err:?}");
        }
    }
    assert!((build_grid(ClosedCurve::circle(1.0), 16).unwrap().perimeter() - 2.0 * PI).abs() < 1e-13);
}

#[test]
fn circle_single_layer_eigenvalues_decay_like_inverse_k() {
    let n = 256;
    let grid = build_grid(ClosedCurve::circle(1.0), n).unwrap();
    let op = assemble_single_layer(&grid, 1.0).unwrap();
    let eig = sym_eigen_desc(op.symmetric_form(), false).unwrap();
    let prof = SingularValueProfile::from_values("m_tilde", eig.values.iter().map(|v| v.abs()).collect(), FitRange::new(4, n / 4), Some(-1.0));
    assert!((prof.slope.unwrap() + 1.0).abs() < 0.15, "{:?}", prof.slope);
}

#[test]
fn counts_stable_under_refinement() {
    let spec = InteractionSpec::delta(6.0);
    let a = find_bound_states_default(&spec, &Geometry::Curve { curve: ClosedCurve::kite(), nodes: 64 }, 1e-9).unwrap();
    let b = find_bound_states_default(&spec, &Geometry::Curve { curve: ClosedCurve::kite(), nodes: 128 }, 1e-9).unwrap();
    assert_eq!(a.iter().map(|s| s.multiplicity).sum::<usize>(), b.iter().map(|s| s.multiplicity).sum::<usize>());
    for beta in [0.3, 1.0] {
        let spec = InteractionSpec::delta_prime(beta);
        let c64 = count_bound_states(&spec, &Geometry::CircleModes { radius: 1.0, max_order: 64 }, 1e-6).unwrap();
        let c128 = count_bound_states(&spec, &Geometry::CircleModes { radius: 1.0, max_order: 128 }, 1e-6).unwrap();
        assert_eq!(c64.count, c128.count);
    }
}
