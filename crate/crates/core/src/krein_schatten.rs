//! Krein resolvent differences on finite sections of `L²(R²)` and the decay
//! of their singular values.
//!
//! All volume operators are handled in `L²`-symmetric coordinates: an
//! operator with kernel samples `K` on a grid with cell weights `V` is
//! represented by `V^{1/2} K V^{1/2}`, whose singular values approximate those
//! of the integral operator. Resolvent differences have rank at most the
//! number of boundary unknowns and are kept as `U Z Uᵀ` factors, so their
//! singular values come from a thin QR of `U` and a small eigenproblem.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boundary_ops::{assemble_single_layer, sym_eigen_desc, symmetrize, Geometry};
use crate::bs_solver::{bs_eigenvalues, InteractionSpec, Strength};
use crate::error::{Error, Result};
use crate::geometry::{BoundaryGrid, ClosedCurve};
use crate::kernels::{green_2d_radial, SpectralPoint};
use crate::specfun::{bessel_k01, ln_bessel_ik};

/// Volume points closer than this to a boundary node are rejected.
pub const MIN_NODE_DISTANCE: f64 = 1e-8;

/// Condition number of `I - αM̃(λ)` above which `λ` is treated as an eigenvalue.
pub const MAX_MIDDLE_CONDITION: f64 = 1e12;

/// Uniform cell-centred grid on `[-L, L]²`, optionally with the cells near
/// a curve removed.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeGrid {
    pub half_width: f64,
    pub cells_per_side: usize,
    pub spacing: f64,
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    pub excluded: usize,
}

impl VolumeGrid {
    pub fn new(half_width: f64, cells_per_side: usize) -> Result<Self> {
        if !(half_width > 0.0) || !half_width.is_finite() || cells_per_side == 0 {
            return Err(Error::Config(format!(
                "volume grid needs L > 0 and m ≥ 1, got L = {half_width}, m = {cells_per_side}"
            )));
        }
        let h = 2.0 * half_width / cells_per_side as f64;
        let mut points = Vec::with_capacity(cells_per_side * cells_per_side);
        for iy in 0..cells_per_side {
            for ix in 0..cells_per_side {
                points.push([-half_width + h * (ix as f64 + 0.5), -half_width + h * (iy as f64 + 0.5)]);
            }
        }
        let weights = vec![h * h; points.len()];
        Ok(Self { half_width, cells_per_side, spacing: h, points, weights, excluded: 0 })
    }

    /// Drops cells whose centre lies within `tube` of `curve` (measured on a
    /// dense sampling of the curve).
    pub fn with_tube(half_width: f64, cells_per_side: usize, curve: &ClosedCurve, tube: f64) -> Result<Self> {
        let mut g = Self::new(half_width, cells_per_side)?;
        let samples = 4096;
        let curve_pts: Vec<[f64; 2]> =
            (0..samples).map(|j| curve.point(2.0 * PI * j as f64 / samples as f64)).collect();
        let keep: Vec<bool> = g
            .points
            .par_iter()
            .map(|p| curve_pts.iter().all(|c| (p[0] - c[0]).hypot(p[1] - c[1]) >= tube))
            .collect();
        let before = g.points.len();
        let (points, weights): (Vec<_>, Vec<_>) =
            g.points.iter().zip(&g.weights).zip(&keep).filter(|(_, k)| **k).map(|((p, w), _)| (*p, *w)).unzip();
        g.points = points;
        g.weights = weights;
        g.excluded = before - g.points.len();
        Ok(g)
    }

    /// Box reaching `ln(1/tol)/κ` beyond a curve of extent `extent` (max
    /// distance of the curve from the origin), so the kernels have decayed
    /// to `tol` at the edge.
    pub fn decay_box(extent: f64, kappa: f64, tol: f64, cells_per_side: usize) -> Result<Self> {
        Self::new(extent + (1.0 / tol).ln() / kappa, cells_per_side)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn total_area(&self) -> f64 {
        self.weights.iter().sum()
    }

    fn sqrt_weights(&self) -> Vec<f64> {
        self.weights.iter().map(|w| w.sqrt()).collect()
    }
}

/// Kernel samples together with the cell weights they integrate against.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeOperator {
    pub kernel: DMatrix<f64>,
    pub weights: Vec<f64>,
}

impl VolumeOperator {
    /// `K V`: the matrix acting on function samples.
    pub fn operator_matrix(&self) -> DMatrix<f64> {
        let mut m = self.kernel.clone();
        for (j, w) in self.weights.iter().enumerate() {
            m.column_mut(j).scale_mut(*w);
        }
        m
    }

    /// `V^{1/2} K V^{1/2}`.
    pub fn symmetric_matrix(&self) -> DMatrix<f64> {
        to_symmetric(&self.kernel, &self.weights)
    }

    fn from_symmetric(sym: DMatrix<f64>, weights: &[f64]) -> Self {
        let sq: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
        let n = sq.len();
        Self { kernel: DMatrix::from_fn(n, n, |i, j| sym[(i, j)] / (sq[i] * sq[j])), weights: weights.to_vec() }
    }
}

fn to_symmetric(kernel: &DMatrix<f64>, weights: &[f64]) -> DMatrix<f64> {
    let sq: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
    DMatrix::from_fn(kernel.nrows(), kernel.ncols(), |i, j| sq[i] * kernel[(i, j)] * sq[j])
}

/// Symmetric low-rank operator `U Z Uᵀ` (`Z` symmetric) in `L²` coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankSym {
    pub factor: DMatrix<f64>,
    pub core: DMatrix<f64>,
}

impl LowRankSym {
    pub fn rank_bound(&self) -> usize {
        self.factor.ncols()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = &self.factor * &self.core * self.factor.transpose();
        symmetrize(&mut d);
        d
    }

    /// Singular values, descending; exactly the nonzero part of the spectrum
    /// of the dense operator.
    pub fn singular_values(&self) -> Result<Vec<f64>> {
        let n = self.factor.nrows();
        let r = self.factor.ncols();
        let (rf, rows) = if n >= r {
            (self.factor.clone().qr().r(), r)
        } else {
            (self.factor.clone(), n)
        };
        let mut small = if n >= r { &rf * &self.core * rf.transpose() } else { self.to_dense() };
        symmetrize(&mut small);
        debug_assert_eq!(small.nrows(), rows);
        let eig = sym_eigen_desc(small, false)?;
        let mut s: Vec<f64> = eig.values.iter().map(|v| v.abs()).collect();
        s.sort_by(|a, b| b.total_cmp(a));
        Ok(s)
    }
}

/// `Γ(λ)`: entries `G_λ(x_q, y_j)·w_j`.
pub fn gamma_matrix(point: SpectralPoint, volume: &VolumeGrid, boundary: &BoundaryGrid) -> Result<DMatrix<f64>> {
    let g = green_samples(point.kappa(), volume, boundary)?;
    let mut m = g;
    for (j, w) in boundary.weights.iter().enumerate() {
        m.column_mut(j).scale_mut(*w);
    }
    Ok(m)
}

/// Raw kernel samples `G_λ(x_q, y_j)`.
fn green_samples(kappa: f64, volume: &VolumeGrid, boundary: &BoundaryGrid) -> Result<DMatrix<f64>> {
    let nb = boundary.len();
    let rows: Vec<Vec<f64>> = volume
        .points
        .par_iter()
        .enumerate()
        .map(|(q, x)| {
            boundary
                .points
                .iter()
                .map(|y| {
                    let r = (x[0] - y[0]).hypot(x[1] - y[1]);
                    if r < MIN_NODE_DISTANCE {
                        Err(Error::VolumeTooClose { index: q, distance: r })
                    } else {
                        Ok(green_2d_radial(r, kappa))
                    }
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(DMatrix::from_fn(volume.len(), nb, |q, j| rows[q][j]))
}

/// Which resolvent difference a mode computation describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DifferenceKind {
    /// `(A_δ - λ)^{-1} - (A_free - λ)^{-1}`
    DeltaVsFree,
    /// `(A_δ′ - λ)^{-1} - (A_free - λ)^{-1}`
    DeltaPrimeVsFree,
    /// `(A_δ′ - λ)^{-1} - (A_N - λ)^{-1}`, Neumann-decoupled reference
    DeltaPrimeVsNeumann,
}

impl DifferenceKind {
    pub fn for_spec(spec: &InteractionSpec) -> Self {
        match spec {
            InteractionSpec::Delta { .. } => DifferenceKind::DeltaVsFree,
            InteractionSpec::DeltaPrime { .. } => DifferenceKind::DeltaPrimeVsFree,
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            DifferenceKind::DeltaVsFree => "delta_vs_free",
            DifferenceKind::DeltaPrimeVsFree => "delta_prime_vs_free",
            DifferenceKind::DeltaPrimeVsNeumann => "delta_prime_vs_neumann",
        }
    }

    /// Predicted decay exponent of `s_k` for the `l`-th resolvent power in
    /// dimension `n`.
    pub fn expected_slope(&self, power: u32, dimension: u32) -> f64 {
        let l = power as f64;
        let d = (dimension - 1) as f64;
        match self {
            DifferenceKind::DeltaVsFree | DifferenceKind::DeltaPrimeVsNeumann => -(2.0 * l + 1.0) / d,
            DifferenceKind::DeltaPrimeVsFree => -2.0 * l / d,
        }
    }

    fn check(&self, spec: &InteractionSpec) -> Result<()> {
        let ok = matches!(
            (self, spec),
            (DifferenceKind::DeltaVsFree, InteractionSpec::Delta { .. })
                | (DifferenceKind::DeltaPrimeVsFree | DifferenceKind::DeltaPrimeVsNeumann, InteractionSpec::DeltaPrime { .. })
        );
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("{} does not match the interaction {spec:?}", self.tag())))
        }
    }
}

/// Middle-factor weight `c_l` of mode `l`: the difference acts as
/// `Σ_l c_l γ e_l ⊗ γ e_l`.
fn mode_coefficient(kind: DifferenceKind, spec: &InteractionSpec, geometry: &Geometry, l: u32, kappa: f64) -> Result<f64> {
    let m = geometry.mode_values(l, kappa)?;
    Ok(match (kind, spec) {
        (DifferenceKind::DeltaVsFree, InteractionSpec::Delta { alpha: Strength::Constant(a) }) => {
            a / (1.0 - a * m.m_tilde)
        }
        (DifferenceKind::DeltaPrimeVsFree, InteractionSpec::DeltaPrime { beta }) => {
            beta / (m.m_hat * (beta - m.m_hat))
        }
        (DifferenceKind::DeltaPrimeVsNeumann, InteractionSpec::DeltaPrime { beta }) => 1.0 / (beta - m.m_hat),
        _ => return Err(Error::Unsupported("mode differences need a constant strength".into())),
    })
}

/// Exact singular values of a resolvent difference on a circle or sphere:
/// `|c_l|·‖γ(λ)e_l‖²` with `‖γ(λ)e_l‖² = ∂_λ m_l(λ)`, repeated with the mode
/// multiplicity.
pub fn mode_singular_values(
    kind: DifferenceKind,
    point: SpectralPoint,
    spec: &InteractionSpec,
    geometry: &Geometry,
) -> Result<Vec<f64>> {
    kind.check(spec)?;
    spec.validate(geometry)?;
    if !geometry.is_separable() {
        return Err(Error::Unsupported("mode singular values need a circle or sphere mode backend".into()));
    }
    let kappa = point.kappa();
    let mut out = Vec::new();
    for l in 0..=geometry.max_order().unwrap_or(0) {
        let c = mode_coefficient(kind, spec, geometry, l, kappa)?;
        let d = geometry.mode_derivatives(l, kappa)?;
        let norm2 = match kind {
            DifferenceKind::DeltaVsFree => d.dm_tilde,
            _ => d.dm_hat,
        };
        let s = (c * norm2).abs();
        out.extend(std::iter::repeat(s).take(geometry.mode_multiplicity(l)));
    }
    out.sort_by(|a, b| b.total_cmp(a));
    Ok(out)
}

/// Radial profile of `γ(λ)e_l`: the solution of the homogeneous equation
/// with boundary data `e_l`, divided by the angular harmonic.
fn mode_radial(kind: DifferenceKind, l: u32, kappa: f64, radius: f64, r: f64) -> Result<f64> {
    let m = crate::boundary_ops::mode_weyl_circle(l, kappa, radius)?;
    let (ln_i_r, ln_k_r) = ln_bessel_ik(l, kappa * radius)?;
    if r < radius {
        let ratio = if r == 0.0 {
            if l == 0 {
                (-ln_i_r).exp()
            } else {
                0.0
            }
        } else {
            (ln_bessel_ik(l, kappa * r)?.0 - ln_i_r).exp()
        };
        Ok(match kind {
            DifferenceKind::DeltaVsFree => m.m_tilde * ratio,
            _ => -m.m_i * ratio,
        })
    } else {
        let ratio = if r == radius { 1.0 } else { (ln_bessel_ik(l, kappa * r)?.1 - ln_k_r).exp() };
        Ok(match kind {
            DifferenceKind::DeltaVsFree => m.m_tilde * ratio,
            _ => m.m_e * ratio,
        })
    }
}

fn mode_factors(
    kind: DifferenceKind,
    point: SpectralPoint,
    spec: &InteractionSpec,
    geometry: &Geometry,
    volume: &VolumeGrid,
) -> Result<LowRankSym> {
    kind.check(spec)?;
    let Geometry::CircleModes { radius, max_order } = *geometry else {
        return Err(Error::Unsupported("volume-mapped mode differences need the circle mode backend".into()));
    };
    let kappa = point.kappa();
    let sq = volume.sqrt_weights();
    let polar: Vec<(f64, f64)> = volume.points.iter().map(|p| (p[0].hypot(p[1]), p[1].atan2(p[0]))).collect();
    let mut columns: Vec<DVector<f64>> = Vec::new();
    let mut core = Vec::new();
    for l in 0..=max_order {
        let c = mode_coefficient(kind, spec, geometry, l, kappa)?;
        let radial: Vec<f64> =
            polar.par_iter().map(|(r, _)| mode_radial(kind, l, kappa, radius, *r)).collect::<Result<_>>()?;
        let harmonics: Vec<(f64, Box<dyn Fn(f64) -> f64>)> = if l == 0 {
            vec![(1.0 / (2.0 * PI * radius).sqrt(), Box::new(|_| 1.0))]
        } else {
            let lf = l as f64;
            let norm = 1.0 / (PI * radius).sqrt();
            vec![(norm, Box::new(move |t: f64| (lf * t).cos())), (norm, Box::new(move |t: f64| (lf * t).sin()))]
        };
        for (norm, f) in harmonics {
            columns.push(DVector::from_iterator(
                volume.len(),
                polar.iter().zip(&radial).zip(&sq).map(|(((_, t), g), s)| s * g * norm * f(*t)),
            ));
            core.push(c);
        }
    }
    let factor = DMatrix::from_columns(&columns);
    Ok(LowRankSym { factor, core: DMatrix::from_diagonal(&DVector::from_vec(core)) })
}

/// Estimate of the eigenvalue nearest to `λ` from the Birman–Schwinger branch
/// closest to one, by a secant step.
fn nearest_eigenvalue_estimate(point: SpectralPoint, spec: &InteractionSpec, geometry: &Geometry) -> Option<f64> {
    let closest = |p: SpectralPoint| -> Option<f64> {
        let e = bs_eigenvalues(p, spec, geometry).ok()?;
        e.iter().map(|v| v.value).min_by(|a, b| (a - 1.0).abs().total_cmp(&(b - 1.0).abs()))
    };
    let lam = point.lambda();
    let step = 1e-6 * lam.abs();
    let p2 = SpectralPoint::from_lambda(lam - step).ok()?;
    let (a, b) = (closest(point)?, closest(p2)?);
    if a == b {
        return Some(lam);
    }
    Some(lam + (1.0 - a) * (-step) / (b - a))
}

/// Signed eigenvalue of `I - αM̃(λ)` (or `I - β^{-1}M̂(λ)`) closest to zero;
/// it changes sign across every eigenvalue `λ*`.
pub fn pole_indicator(point: SpectralPoint, spec: &InteractionSpec, geometry: &Geometry) -> Result<f64> {
    let e = bs_eigenvalues(point, spec, geometry)?;
    Ok(e.iter().map(|v| 1.0 - v.value).min_by(|a, b| a.abs().total_cmp(&b.abs())).unwrap_or(1.0))
}

/// Factors of the Krein difference `(A - λ)^{-1} - (A_ref - λ)^{-1}` in
/// `L²` coordinates. δ on curves uses the Nyström single layer; the circle
/// mode backend maps radial γ-field columns onto the volume grid.
pub fn krein_factors(
    point: SpectralPoint,
    spec: &InteractionSpec,
    geometry: &Geometry,
    volume: &VolumeGrid,
    kind: DifferenceKind,
) -> Result<LowRankSym> {
    spec.validate(geometry)?;
    kind.check(spec)?;
    match geometry {
        Geometry::Curve { .. } => {
            let InteractionSpec::Delta { alpha } = spec else {
                return Err(Error::Unsupported("δ′ Krein differences need the circle mode backend".into()));
            };
            let grid = geometry.grid()?;
            let nb = grid.len();
            let alpha: Vec<f64> = match alpha {
                Strength::Constant(a) => vec![*a; nb],
                Strength::Sampled(v) => v.clone(),
            };
            let sqv = volume.sqrt_weights();
            let sqw: Vec<f64> = grid.weights.iter().map(|w| w.sqrt()).collect();
            let g = green_samples(point.kappa(), volume, &grid)?;
            let factor = DMatrix::from_fn(volume.len(), nb, |q, j| sqv[q] * g[(q, j)] * sqw[j]);
            if alpha.iter().all(|a| *a == 0.0) {
                return Ok(LowRankSym { factor, core: DMatrix::zeros(nb, nb) });
            }
            let a = assemble_single_layer(&grid, point.kappa())?;
            let middle = DMatrix::from_fn(nb, nb, |i, j| if i == j { 1.0 } else { 0.0 } - alpha[i] * a.matrix[(i, j)]);
            let sv = middle.clone().singular_values();
            let condition = sv.max() / sv.min();
            log::debug!("cond(I - αM̃(λ = {})) = {condition:e}", point.lambda());
            if !(condition < MAX_MIDDLE_CONDITION) {
                return Err(Error::NearEigenvalue {
                    lambda: point.lambda(),
                    condition,
                    nearest: nearest_eigenvalue_estimate(point, spec, geometry),
                });
            }
            let rhs = DMatrix::from_diagonal(&DVector::from_vec(alpha));
            let x = middle.lu().solve(&rhs).ok_or(Error::Singular)?;
            // Z = W^{1/2} (I - αA)^{-1} α W^{-1/2}, symmetric in exact arithmetic
            let mut core = DMatrix::from_fn(nb, nb, |i, j| sqw[i] * x[(i, j)] / sqw[j]);
            symmetrize(&mut core);
            Ok(LowRankSym { factor, core })
        }
        Geometry::CircleModes { .. } => {
            if spec.is_trivial() {
                let f = mode_factors(kind, point, &InteractionSpec::delta(1.0), geometry, volume)?;
                let r = f.factor.ncols();
                return Ok(LowRankSym { factor: f.factor, core: DMatrix::zeros(r, r) });
            }
            for l in 0..=geometry.max_order().unwrap_or(0) {
                let c = mode_coefficient(kind, spec, geometry, l, point.kappa())?;
                if !c.is_finite() || c.abs() > MAX_MIDDLE_CONDITION {
                    return Err(Error::NearEigenvalue {
                        lambda: point.lambda(),
                        condition: c.abs(),
                        nearest: nearest_eigenvalue_estimate(point, spec, geometry),
                    });
                }
            }
            mode_factors(kind, point, spec, geometry, volume)
        }
        Geometry::SphereModes { .. } => {
            Err(Error::Unsupported("volume sections are two-dimensional; use mode_singular_values on spheres".into()))
        }
    }
}

/// Dense Krein difference `D(λ)` as a kernel on the volume grid.
pub fn krein_difference(
    point: SpectralPoint,
    spec: &InteractionSpec,
    geometry: &Geometry,
    volume: &VolumeGrid,
) -> Result<VolumeOperator> {
    let f = krein_factors(point, spec, geometry, volume, DifferenceKind::for_spec(spec))?;
    Ok(VolumeOperator::from_symmetric(f.to_dense(), &volume.weights))
}

/// `∫_{|x| < ρ} G_λ(0, x) dx = (1 - κρ K_1(κρ)) / κ²`.
fn disc_integral(kappa: f64, rho: f64) -> f64 {
    let z = kappa * rho;
    let (_, k1) = bessel_k01(z);
    (1.0 - z * k1) / (kappa * kappa)
}

fn free_entry(kappa: f64, volume: &VolumeGrid, sq: &[f64], q: usize, p: usize) -> f64 {
    if q == p {
        disc_integral(kappa, (volume.weights[q] / PI).sqrt())
    } else {
        let (x, y) = (volume.points[q], volume.points[p]);
        sq[q] * sq[p] * green_2d_radial((x[0] - y[0]).hypot(x[1] - y[1]), kappa)
    }
}

/// Free resolvent kernel on the grid. Off the diagonal the kernel is
/// `G_λ(x_q, x_r)`; each diagonal entry is the integral of `G_λ(x_q, ·)` over
/// the cell, replaced by an equal-area disc, divided by the cell weight.
pub fn free_resolvent_matrix(point: SpectralPoint, volume: &VolumeGrid) -> VolumeOperator {
    VolumeOperator::from_symmetric(free_resolvent_symmetric(point, volume), &volume.weights)
}

/// Free resolvent in `L²` coordinates.
pub fn free_resolvent_symmetric(point: SpectralPoint, volume: &VolumeGrid) -> DMatrix<f64> {
    let n = volume.len();
    let kappa = point.kappa();
    let sq = volume.sqrt_weights();
    let rows: Vec<Vec<f64>> =
        (0..n).into_par_iter().map(|q| (0..n).map(|p| free_entry(kappa, volume, &sq, q, p)).collect()).collect();
    DMatrix::from_fn(n, n, |q, p| rows[q][p])
}

/// `Ŝ X` for the free resolvent `Ŝ` in `L²` coordinates, row by row without
/// storing `Ŝ`.
pub fn free_resolvent_apply(point: SpectralPoint, volume: &VolumeGrid, x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = volume.len();
    let c = x.ncols();
    let kappa = point.kappa();
    let sq = volume.sqrt_weights();
    let xt = x.transpose();
    let rows: Vec<DVector<f64>> = (0..n)
        .into_par_iter()
        .map(|q| {
            let row = DVector::from_iterator(n, (0..n).map(|p| free_entry(kappa, volume, &sq, q, p)));
            &xt * row
        })
        .collect();
    DMatrix::from_fn(n, c, |q, j| rows[q][j])
}

/// Factors of `(A - λ)^{-l} - (A_free - λ)^{-l}` via the telescoping sum
/// `Σ_k a^{l-k-1}(a - b)b^k` with `a - b = U Z Uᵀ`; never forms `Ŝ`.
pub fn power_difference_factors(
    power: u32,
    point: SpectralPoint,
    spec: &InteractionSpec,
    geometry: &Geometry,
    volume: &VolumeGrid,
) -> Result<LowRankSym> {
    if !(1..=3).contains(&power) {
        return Err(Error::Config(format!("resolvent power must be 1, 2 or 3, got {power}")));
    }
    let base = krein_factors(point, spec, geometry, volume, DifferenceKind::for_spec(spec))?;
    if power == 1 {
        return Ok(base);
    }
    let l = power as usize;
    let u = &base.factor;
    let z = &base.core;
    let r = u.ncols();
    // A_i = a^i U, B_k = b^k U
    let mut a_blocks = vec![u.clone()];
    let mut b_blocks = vec![u.clone()];
    for i in 1..l {
        let prev_a = &a_blocks[i - 1];
        let next_a = free_resolvent_apply(point, volume, prev_a) + u * (z * (u.transpose() * prev_a));
        let next_b = free_resolvent_apply(point, volume, &b_blocks[i - 1]);
        a_blocks.push(next_a);
        b_blocks.push(next_b);
    }
    let blocks = 2 * l - 1;
    let mut factor = DMatrix::zeros(volume.len(), blocks * r);
    for (i, a) in a_blocks.iter().enumerate() {
        factor.view_mut((0, i * r), (volume.len(), r)).copy_from(a);
    }
    for (k, b) in b_blocks.iter().enumerate().skip(1) {
        factor.view_mut((0, (l - 1 + k) * r), (volume.len(), r)).copy_from(b);
    }
    let b_index = |k: usize| if k == 0 { 0 } else { l - 1 + k };
    let mut core = DMatrix::zeros(blocks * r, blocks * r);
    for k in 0..l {
        let (bi, bj) = (l - 1 - k, b_index(k));
        let mut view = core.view_mut((bi * r, bj * r), (r, r));
        view += z;
    }
    // the sum is symmetric; symmetrize the core so the factorization is too
    let ct = core.transpose();
    core = (core + ct) * 0.5;
    Ok(LowRankSym { factor, core })
}

/// Dense `(A - λ)^{-l} - (A_free - λ)^{-l}` as a kernel on the volume grid.
pub fn power_difference(
    power: u32,
    point: SpectralPoint,
    spec: &InteractionSpec,
    geometry: &Geometry,
    volume: &VolumeGrid,
) -> Result<VolumeOperator> {
    if !(1..=3).contains(&power) {
        return Err(Error::Config(format!("resolvent power must be 1, 2 or 3, got {power}")));
    }
    let d = krein_factors(point, spec, geometry, volume, DifferenceKind::for_spec(spec))?.to_dense();
    if power == 1 {
        return Ok(VolumeOperator::from_symmetric(d, &volume.weights));
    }
    let b = free_resolvent_symmetric(point, volume);
    let a = &b + &d;
    let l = power as usize;
    let mut a_pow = vec![DMatrix::identity(b.nrows(), b.nrows())];
    let mut b_pow = vec![DMatrix::identity(b.nrows(), b.nrows())];
    for i in 1..l {
        a_pow.push(&a_pow[i - 1] * &a);
        b_pow.push(&b_pow[i - 1] * &b);
    }
    let mut sum = DMatrix::zeros(b.nrows(), b.nrows());
    for k in 0..l {
        sum += &a_pow[l - 1 - k] * &d * &b_pow[k];
    }
    symmetrize(&mut sum);
    Ok(VolumeOperator::from_symmetric(sum, &volume.weights))
}

/// Inclusive index range `[lo, hi]` (1-based) of a log-log fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FitRange {
    pub lo: usize,
    pub hi: usize,
}

impl FitRange {
    pub fn new(lo: usize, hi: usize) -> Self {
        Self { lo, hi }
    }

    /// `[4, min(32, N/4)]` for `l = 1`, `[3, 12]` for higher powers.
    pub fn default_for(power: u32, boundary_nodes: usize) -> Self {
        if power <= 1 {
            Self { lo: 4, hi: 32.min(boundary_nodes / 4).max(5) }
        } else {
            Self { lo: 3, hi: 12 }
        }
    }

    /// `[8, min(64, N/4)]` for exact mode-basis profiles with `N` mode
    /// unknowns; there is no quadrature noise to stay above.
    pub fn modes(unknowns: usize) -> Self {
        Self { lo: 8, hi: 64.min(unknowns / 4).max(11) }
    }
}

/// Relative noise floor below which singular values are excluded from fits.
pub fn noise_floor() -> f64 {
    1e3 * f64::EPSILON
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularValueProfile {
    pub tag: String,
    pub values: Vec<f64>,
    pub fit: FitRange,
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    pub expected_slope: Option<f64>,
    /// fit range was empty after the noise guard
    pub flagged: bool,
}

impl SingularValueProfile {
    /// Sorts `values` descending and fits `ln s_k = slope·ln k + intercept`
    /// over the guarded range.
    pub fn from_values(tag: impl Into<String>, mut values: Vec<f64>, fit: FitRange, expected: Option<f64>) -> Self {
        values.sort_by(|a, b| b.total_cmp(a));
        let floor = values.first().copied().unwrap_or(0.0) * noise_floor();
        let pts: Vec<(f64, f64)> = (fit.lo.max(1)..=fit.hi)
            .filter(|&k| k <= values.len() && values[k - 1] > floor && values[k - 1] > 0.0)
            .map(|k| ((k as f64).ln(), values[k - 1].ln()))
            .collect();
        let (slope, intercept) = if pts.len() >= 3 { least_squares(&pts) } else { (None, None) };
        Self { tag: tag.into(), values, fit, slope, intercept, expected_slope: expected, flagged: slope.is_none() }
    }
}

fn least_squares(pts: &[(f64, f64)]) -> (Option<f64>, Option<f64>) {
    let n = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (sx / n, sy / n);
    let (sxx, sxy) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + (x - mx).powi(2), b + (x - mx) * (y - my)));
    if sxx == 0.0 {
        return (None, None);
    }
    let slope = sxy / sxx;
    (Some(slope), Some(my - slope * mx))
}

/// Singular-value profile of the operator with kernel samples `kernel` on a
/// grid with cell weights `weights`.
pub fn singular_profile(
    kernel: &DMatrix<f64>,
    weights: &[f64],
    fit: FitRange,
    tag: impl Into<String>,
    expected: Option<f64>,
) -> Result<SingularValueProfile> {
    if kernel.nrows() != kernel.ncols() || kernel.nrows() != weights.len() {
        return Err(Error::Config(format!(
            "profile needs a square kernel matching {} weights, got {}×{}",
            weights.len(),
            kernel.nrows(),
            kernel.ncols()
        )));
    }
    let sym = to_symmetric(kernel, weights);
    let asym = (&sym - sym.transpose()).norm();
    let values: Vec<f64> = if asym <= 1e-12 * sym.norm() {
        let mut s = sym.clone();
        symmetrize(&mut s);
        sym_eigen_desc(s, false)?.values.iter().map(|v| v.abs()).collect()
    } else {
        sym.singular_values().iter().copied().collect()
    };
    Ok(SingularValueProfile::from_values(tag, values, fit, expected))
}

/// Profile of a factorized operator.
pub fn low_rank_profile(
    op: &LowRankSym,
    fit: FitRange,
    tag: impl Into<String>,
    expected: Option<f64>,
) -> Result<SingularValueProfile> {
    Ok(SingularValueProfile::from_values(tag, op.singular_values()?, fit, expected))
}

/// Exact mode-basis profile on a circle or sphere.
pub fn mode_profile(
    kind: DifferenceKind,
    point: SpectralPoint,
    spec: &InteractionSpec,
    geometry: &Geometry,
    fit: FitRange,
) -> Result<SingularValueProfile> {
    let values = mode_singular_values(kind, point, spec, geometry)?;
    let expected = kind.expected_slope(1, geometry.dimension());
    Ok(SingularValueProfile::from_values(format!("{}_l1_modes", kind.tag()), values, fit, Some(expected)))
}

/// `‖R(λ) - R(μ) - (λ - μ)R(λ)R(μ)‖_F / ‖R(λ)‖_F` for `R = R_free + D` on the
/// volume grid.
pub fn pseudo_resolvent_check(
    lambda: SpectralPoint,
    mu: SpectralPoint,
    spec: &InteractionSpec,
    geometry: &Geometry,
    volume: &VolumeGrid,
) -> Result<f64> {
    let resolvent = |p: SpectralPoint| -> Result<DMatrix<f64>> {
        let d = krein_factors(p, spec, geometry, volume, DifferenceKind::for_spec(spec))?.to_dense();
        Ok(free_resolvent_symmetric(p, volume) + d)
    };
    let rl = resolvent(lambda)?;
    if lambda == mu {
        return Ok(0.0);
    }
    let rm = resolvent(mu)?;
    let lhs = &rl - &rm - (lambda.lambda() - mu.lambda()) * (&rl * &rm);
    Ok(lhs.norm() / rl.norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_grid;

    fn p(lambda: f64) -> SpectralPoint {
        SpectralPoint::from_lambda(lambda).unwrap()
    }

    fn circle(nodes: usize) -> Geometry {
        Geometry::Curve { curve: ClosedCurve::circle(1.0), nodes }
    }

    #[test]
    fn volume_grid_measure() {
        let g = VolumeGrid::new(2.5, 17).unwrap();
        assert!((g.total_area() - 25.0).abs() < 1e-12);
        assert_eq!(g.len(), 289);
        let t = VolumeGrid::with_tube(2.5, 40, &ClosedCurve::circle(1.0), 0.1).unwrap();
        assert!(t.excluded > 0 && t.len() + t.excluded == 1600);
        assert!(VolumeGrid::new(0.0, 4).is_err());
    }

    #[test]
    fn gamma_columns_decay_at_rate_kappa() {
        let kappa = 1.5;
        let grid = build_grid(ClosedCurve::circle(1.0), 32).unwrap();
        let pts: Vec<[f64; 2]> = (0..12).map(|j| [2.0 + 0.5 * j as f64, 0.0]).collect();
        let vol = VolumeGrid { half_width: 10.0, cells_per_side: 1, spacing: 1.0, weights: vec![1.0; 12], points: pts, excluded: 0 };
        let g = gamma_matrix(p(-kappa * kappa), &vol, &grid).unwrap();
        // decay of the column through node 0 at (1, 0): log-linear fit of G vs distance
        let xs: Vec<(f64, f64)> = (6..12).map(|q| (vol.points[q][0] - 1.0, (g[(q, 0)] * (vol.points[q][0] - 1.0).sqrt()).ln())).collect();
        let (slope, _) = least_squares(&xs);
        assert!((slope.unwrap() + kappa).abs() < 0.1 * kappa);
        let g2 = gamma_matrix(p(-4.0 * kappa * kappa), &vol, &grid).unwrap();
        assert!(g2.column(0).norm() < g.column(0).norm());
    }

    #[test]
    fn gamma_rejects_points_on_nodes() {
        let grid = build_grid(ClosedCurve::circle(1.0), 4).unwrap();
        let vol = VolumeGrid { half_width: 2.0, cells_per_side: 1, spacing: 1.0, weights: vec![1.0], points: vec![[1.0, 0.0]], excluded: 0 };
        assert!(matches!(gamma_matrix(p(-1.0), &vol, &grid), Err(Error::VolumeTooClose { .. })));
    }

    #[test]
    fn zero_strength_difference_vanishes() {
        let vol = VolumeGrid::new(2.0, 12).unwrap();
        let d = krein_difference(p(-1.0), &InteractionSpec::delta(0.0), &circle(32), &vol).unwrap();
        assert_eq!(d.kernel.amax(), 0.0);
        for l in 1..=3 {
            let d = power_difference(l, p(-1.0), &InteractionSpec::delta(0.0), &circle(32), &vol).unwrap();
            assert_eq!(d.kernel.amax(), 0.0);
        }
    }

    #[test]
    fn difference_symmetric_and_low_rank() {
        let vol = VolumeGrid::new(2.0, 16).unwrap();
        let spec = InteractionSpec::delta(2.0);
        let d = krein_difference(p(-1.0), &spec, &Geometry::Curve { curve: ClosedCurve::kite(), nodes: 32 }, &vol).unwrap();
        let s = d.symmetric_matrix();
        assert!((&s - s.transpose()).norm() < 1e-10 * s.norm());
        let sv = s.singular_values();
        let mut sv: Vec<f64> = sv.iter().copied().collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        assert!(sv[32..].iter().all(|v| *v <= 1e3 * f64::EPSILON * sv[0]));
    }

    #[test]
    fn factored_singular_values_match_dense() {
        let vol = VolumeGrid::new(2.0, 14).unwrap();
        let f = krein_factors(p(-1.0), &InteractionSpec::delta(2.0), &circle(32), &vol, DifferenceKind::DeltaVsFree).unwrap();
        let fast = f.singular_values().unwrap();
        let mut dense: Vec<f64> = f.to_dense().singular_values().iter().copied().collect();
        dense.sort_by(|a, b| b.total_cmp(a));
        for k in 0..20 {
            assert!((fast[k] - dense[k]).abs() < 1e-12 * dense[0]);
        }
    }

    #[test]
    fn power_one_is_krein_difference() {
        let vol = VolumeGrid::new(2.0, 10).unwrap();
        let spec = InteractionSpec::delta(1.5);
        let a = krein_difference(p(-1.0), &spec, &circle(32), &vol).unwrap();
        let b = power_difference(1, p(-1.0), &spec, &circle(32), &vol).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn power_two_matches_direct_square_difference() {
        let vol = VolumeGrid::new(2.0, 12).unwrap();
        let spec = InteractionSpec::delta(2.0);
        let g = circle(32);
        let d = krein_difference(p(-1.0), &spec, &g, &vol).unwrap().symmetric_matrix();
        let free = free_resolvent_symmetric(p(-1.0), &vol);
        let pert = &free + &d;
        let direct = &pert * &pert - &free * &free;
        let tele = power_difference(2, p(-1.0), &spec, &g, &vol).unwrap().symmetric_matrix();
        assert!((&direct - &tele).norm() < 1e-12 * direct.norm());
    }

    #[test]
    fn streamed_factors_match_dense_powers() {
        let vol = VolumeGrid::new(2.0, 12).unwrap();
        let spec = InteractionSpec::delta(2.0);
        let g = circle(32);
        for l in 2..=3 {
            let dense = power_difference(l, p(-1.0), &spec, &g, &vol).unwrap().symmetric_matrix();
            let f = power_difference_factors(l, p(-1.0), &spec, &g, &vol).unwrap();
            assert!((f.to_dense() - &dense).norm() < 1e-11 * dense.norm());
        }
    }

    #[test]
    fn free_resolvent_symmetric_positive() {
        let vol = VolumeGrid::new(2.0, 14).unwrap();
        let s = free_resolvent_symmetric(p(-1.0), &vol);
        assert!((&s - s.transpose()).amax() < 1e-12 * s.amax());
        let e = sym_eigen_desc(s, false).unwrap();
        assert!(*e.values.last().unwrap() > 0.0);
        let op = free_resolvent_matrix(p(-1.0), &vol).operator_matrix();
        let h2 = vol.spacing * vol.spacing;
        let (x, y) = (vol.points[0], vol.points[1]);
        assert!((op[(0, 1)] - green_2d_radial((x[0] - y[0]).hypot(x[1] - y[1]), 1.0) * h2).abs() < 1e-15);
    }

    #[test]
    fn free_resolvent_inverts_helmholtz() {
        // u = (1 - r²)^4 on the unit disc, f = (-Δ + κ²)u
        let kappa = 1.0;
        let vol = VolumeGrid::new(1.25, 64).unwrap();
        let u = |x: [f64; 2]| {
            let s = 1.0 - x[0] * x[0] - x[1] * x[1];
            if s > 0.0 {
                s.powi(4)
            } else {
                0.0
            }
        };
        let f = |x: [f64; 2]| {
            let r2 = x[0] * x[0] + x[1] * x[1];
            let s = 1.0 - r2;
            if s <= 0.0 {
                return 0.0;
            }
            // Δ(s⁴) = 4s³Δs + 12s²|∇s|², Δs = -4, |∇s|² = 4r²
            let lap = -16.0 * s.powi(3) + 48.0 * s * s * r2;
            -lap + kappa * kappa * s.powi(4)
        };
        let fv = DVector::from_iterator(vol.len(), vol.points.iter().map(|x| f(*x)));
        let uv = DVector::from_iterator(vol.len(), vol.points.iter().map(|x| u(*x)));
        let r = free_resolvent_matrix(p(-kappa * kappa), &vol).operator_matrix();
        let approx = r * fv;
        let err = (&approx - &uv).norm() / uv.norm();
        assert!(err < 1e-3, "relative L² error {err:e}");
    }

    #[test]
    fn streamed_free_resolvent_matches_dense() {
        let vol = VolumeGrid::new(2.0, 9).unwrap();
        let x = DMatrix::from_fn(vol.len(), 3, |i, j| ((i * 7 + j * 3) % 11) as f64 - 5.0);
        let a = free_resolvent_apply(p(-2.0), &vol, &x);
        let b = free_resolvent_symmetric(p(-2.0), &vol) * &x;
        assert!((a - b).amax() < 1e-13);
    }

    #[test]
    fn mode_factors_agree_with_nystrom() {
        let vol = VolumeGrid::with_tube(2.5, 24, &ClosedCurve::circle(1.0), 0.25).unwrap();
        let spec = InteractionSpec::delta(2.0);
        let a = krein_factors(p(-1.0), &spec, &circle(128), &vol, DifferenceKind::DeltaVsFree).unwrap().to_dense();
        let b = krein_factors(
            p(-1.0),
            &spec,
            &Geometry::CircleModes { radius: 1.0, max_order: 40 },
            &vol,
            DifferenceKind::DeltaVsFree,
        )
        .unwrap()
        .to_dense();
        assert!((&a - &b).norm() < 1e-6 * a.norm(), "{:e}", (&a - &b).norm() / a.norm());
    }

    #[test]
    fn mode_singular_values_match_volume_quadrature() {
        // ‖γ e_l‖² is the L² norm of the radial profile: (1/R)∫ g_l(r)² r dr
        let kappa = 1.0;
        let radius = 1.0;
        for kind in [DifferenceKind::DeltaVsFree, DifferenceKind::DeltaPrimeVsFree] {
            for l in [0u32, 1, 4] {
                let n = 200_000;
                let r_max = 40.0;
                let h = r_max / n as f64;
                let integral: f64 = (0..n)
                    .map(|j| {
                        let r = h * (j as f64 + 0.5);
                        let g = mode_radial(kind, l, kappa, radius, r).unwrap();
                        g * g * r * h
                    })
                    .sum::<f64>()
                    / radius;
                let d = crate::boundary_ops::mode_weyl_circle_derivatives(l, kappa, radius).unwrap();
                let want = if kind == DifferenceKind::DeltaVsFree { d.dm_tilde } else { d.dm_hat };
                assert!((integral - want).abs() < 1e-6 * want, "{kind:?} l={l}: {integral} vs {want}");
            }
        }
    }

    #[test]
    fn profile_fit_and_noise_guard() {
        let v: Vec<f64> = (1..=64).map(|k| (k as f64).powf(-3.0)).collect();
        let prof = SingularValueProfile::from_values("t", v, FitRange::new(4, 32), Some(-3.0));
        assert!((prof.slope.unwrap() + 3.0).abs() < 1e-12);
        let v = vec![1.0, 1e-17, 1e-18, 1e-19, 1e-20];
        let prof = SingularValueProfile::from_values("t", v, FitRange::new(2, 5), None);
        assert!(prof.flagged && prof.slope.is_none());
    }

    #[test]
    fn pseudo_resolvent_identity_cases() {
        let vol = VolumeGrid::new(2.0, 10).unwrap();
        let spec = InteractionSpec::delta(2.0);
        assert_eq!(pseudo_resolvent_check(p(-1.0), p(-1.0), &spec, &circle(32), &vol).unwrap(), 0.0);
    }

    #[test]
    fn pseudo_resolvent_within_baseline() {
        let vol = VolumeGrid::new(3.0, 16).unwrap();
        let base = pseudo_resolvent_check(p(-1.0), p(-2.0), &InteractionSpec::delta(0.0), &circle(64), &vol).unwrap();
        let r = pseudo_resolvent_check(p(-1.0), p(-2.0), &InteractionSpec::delta(2.0), &circle(64), &vol).unwrap();
        assert!(base > 0.0 && base < 0.1, "{base:e}");
        assert!(r < 3.0 * base, "{r:e} vs {base:e}");
    }

    #[test]
    fn near_eigenvalue_is_reported() {
        let spec = InteractionSpec::delta(2.0);
        let g = Geometry::CircleModes { radius: 1.0, max_order: 16 };
        let states = crate::bs_solver::find_bound_states_default(&spec, &g, 1e-10).unwrap();
        let vol = VolumeGrid::new(2.0, 8).unwrap();
        let err = krein_factors(p(states[0].lambda), &spec, &g, &vol, DifferenceKind::DeltaVsFree).unwrap_err();
        match err {
            Error::NearEigenvalue { nearest: Some(n), .. } => assert!((n - states[0].lambda).abs() < 1e-6),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn pole_indicator_changes_sign() {
        let spec = InteractionSpec::delta(8.0);
        let g = Geometry::CircleModes { radius: 1.0, max_order: 16 };
        for s in crate::bs_solver::find_bound_states_default(&spec, &g, 1e-10).unwrap() {
            let a = pole_indicator(p(s.lambda * (1.0 + 1e-6)), &spec, &g).unwrap();
            let b = pole_indicator(p(s.lambda * (1.0 - 1e-6)), &spec, &g).unwrap();
            assert!(a * b < 0.0);
        }
    }

    #[test]
    fn expected_exponents() {
        assert_eq!(DifferenceKind::DeltaVsFree.expected_slope(1, 2), -3.0);
        assert_eq!(DifferenceKind::DeltaPrimeVsFree.expected_slope(1, 2), -2.0);
        assert_eq!(DifferenceKind::DeltaVsFree.expected_slope(2, 2), -5.0);
        assert_eq!(DifferenceKind::DeltaPrimeVsNeumann.expected_slope(1, 2), -3.0);
    }
}
