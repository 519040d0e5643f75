//! Invariant suite run by the `verify` task.

use deltashell_core::boundary_ops::{assemble_single_layer, weyl_identity_residuals, Geometry};
use deltashell_core::bs_solver::{find_bound_states_default, InteractionSpec};
use deltashell_core::geometry::{build_grid, ClosedCurve};
use deltashell_core::kernels::SpectralPoint;
use deltashell_core::krein_schatten::{pole_indicator, pseudo_resolvent_check, VolumeGrid};
use deltashell_core::op_algebra::algebra_trials;
use deltashell_core::specfun::bessel_ik;
use deltashell_core::Result;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    /// the check passes when `value < threshold`
    pub threshold: f64,
    pub pass: bool,
}

impl Check {
    fn below(name: &str, value: f64, threshold: f64) -> Self {
        Self { name: name.into(), value, threshold, pass: value < threshold }
    }
}

/// Largest relative residual of both Weyl identities on circles and spheres
/// over `l ≤ 40`, `κ ∈ {0.3, 1, 3}`, `R ∈ {0.7, 1, 2}`.
pub fn weyl_suite() -> Result<f64> {
    let mut worst: f64 = 0.0;
    for dim in [2, 3] {
        for radius in [0.7, 1.0, 2.0] {
            for kappa in [0.3, 1.0, 3.0] {
                for l in 0..=40 {
                    let (a, b) = weyl_identity_residuals(dim, l, kappa, radius)?;
                    worst = worst.max(a).max(b);
                }
            }
        }
    }
    Ok(worst)
}

/// Max relative error over `l ≤ l_max` of the assembled single layer's
/// Fourier eigenvalues on a circle against `R I_l(κR) K_l(κR)`.
pub fn circle_fidelity(radius: f64, kappa: f64, nodes: usize, l_max: usize) -> Result<f64> {
    let grid = build_grid(ClosedCurve::circle(radius), nodes)?;
    let op = assemble_single_layer(&grid, kappa)?;
    let mut worst: f64 = 0.0;
    for l in 0..=l_max {
        let p = bessel_ik(l as u32, kappa * radius)?;
        let exact = radius * p.i * p.k;
        worst = worst.max((op.circulant_symbol(l, &grid.params) - exact).abs() / exact);
    }
    Ok(worst)
}

/// Number of bound states across which the pole indicator (the value of
/// `1 - μ` closest to zero) fails to change sign.
pub fn pole_sign_failures(spec: &InteractionSpec, geometry: &Geometry, tol: f64) -> Result<usize> {
    let states = find_bound_states_default(spec, geometry, tol)?;
    let mut failures = 0;
    for s in &states {
        let h = 1e-4 * s.lambda.abs().max(1e-3);
        let lo = pole_indicator(SpectralPoint::from_lambda(s.lambda - h)?, spec, geometry)?;
        let hi = pole_indicator(SpectralPoint::from_lambda(s.lambda + h)?, spec, geometry)?;
        if (lo > 0.0) == (hi > 0.0) {
            failures += 1;
        }
    }
    Ok(failures)
}

pub fn run_suite(seed: u64) -> Result<Vec<Check>> {
    let mut checks = vec![
        Check::below("weyl_identities", weyl_suite()?, 1e-10),
        Check::below("nystrom_circle_fidelity", circle_fidelity(1.0, 1.0, 256, 8)?, 1e-8),
    ];
    let algebra = algebra_trials(seed, 100, 20, 6)?;
    checks.push(Check::below("algebra_conjugation", algebra.conjugation_max, 1e-10));
    checks.push(Check::below("algebra_telescoping", algebra.telescoping_max, 1e-10));

    let spec = InteractionSpec::delta(2.0);
    let modes = Geometry::CircleModes { radius: 1.0, max_order: 32 };
    let nystrom = Geometry::Curve { curve: ClosedCurve::circle(1.0), nodes: 64 };
    let a = find_bound_states_default(&spec, &modes, 1e-10)?;
    let b = find_bound_states_default(&spec, &nystrom, 1e-10)?;
    let count = |s: &[deltashell_core::bs_solver::BoundState]| s.iter().map(|x| x.multiplicity).sum::<usize>();
    checks.push(Check::below("backend_count_mismatch", count(&a).abs_diff(count(&b)) as f64, 0.5));
    let worst = a.iter().zip(&b).map(|(x, y)| (x.lambda - y.lambda).abs() / x.lambda.abs()).fold(0.0, f64::max);
    checks.push(Check::below("backend_eigenvalue_agreement", worst, 1e-6));
    checks.push(Check::below("pole_indicator_sign_failures", pole_sign_failures(&spec, &modes, 1e-10)? as f64, 0.5));

    let vol = VolumeGrid::new(3.0, 16)?;
    let (l, m) = (SpectralPoint::from_lambda(-1.0)?, SpectralPoint::from_lambda(-2.0)?);
    let base = pseudo_resolvent_check(l, m, &InteractionSpec::delta(0.0), &nystrom, &vol)?;
    let r = pseudo_resolvent_check(l, m, &spec, &nystrom, &vol)?;
    checks.push(Check::below("pseudo_resolvent_over_baseline", r / base, 3.0));
    Ok(checks)
}
