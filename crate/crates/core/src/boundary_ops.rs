//! Boundary operators at a spectral point `λ < 0`.
//!
//! Two backends:
//!
//! * Nyström discretization of the single-layer operator
//!   `(M̃φ)(x) = ∫_Σ G_λ(x, y) φ(y) dσ_y` on a smooth closed curve. The
//!   logarithmic singularity of `K_0` is split off and integrated with
//!   Kress' trigonometric product weights, so the scheme is spectrally
//!   accurate on smooth curves.
//! * Closed-form mode values on the circle and the sphere, where the interior
//!   and exterior Neumann-to-Dirichlet maps `M_i`, `M_e` are diagonal in the
//!   Fourier / spherical-harmonic basis. `M̃ = (M_i^{-1} + M_e^{-1})^{-1}` and
//!   `M̂ = M_i + M_e` are assembled from them.
//!
//! Sign convention: `ν_i` points out of the interior, `ν_e = -ν_i`, so the
//! exterior normal derivative is `-∂/∂r`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{build_grid, BoundaryGrid, ClosedCurve};
use crate::kernels::SpectralPoint;
use crate::specfun::{bessel_i0, bessel_ik, bessel_ik_ratios, k0_regular_part, sph_bessel_ik, sph_bessel_ik_ratios};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    SingleLayer,
}

/// Dense Nyström realization of `M̃(λ)` on a boundary grid.
///
/// `matrix` acts on density samples: `(Aφ)_i ≈ (M̃φ)(x_i)`. Quadrature
/// weights are folded in, so `A` itself is not symmetric; `A W^{-1}` is.
#[derive(Debug, Clone)]
pub struct BoundaryOperator {
    pub matrix: DMatrix<f64>,
    pub weights: Vec<f64>,
    pub kind: OperatorKind,
    pub point: SpectralPoint,
}

impl BoundaryOperator {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// `W^{1/2} A W^{-1/2}`, the representation in `L²(Σ)`-orthonormal
    /// coordinates. Similar to `A`, symmetric up to rounding; the returned
    /// matrix is exactly symmetrized.
    pub fn symmetric_form(&self) -> DMatrix<f64> {
        let n = self.len();
        let sq: Vec<f64> = self.weights.iter().map(|w| w.sqrt()).collect();
        let mut s = DMatrix::from_fn(n, n, |i, j| sq[i] * self.matrix[(i, j)] / sq[j]);
        symmetrize(&mut s);
        s
    }

    /// Largest entry of `|S - Sᵀ|` for `S = W^{1/2} A W^{-1/2}` before
    /// symmetrization.
    pub fn symmetry_defect(&self) -> f64 {
        let n = self.len();
        let sq: Vec<f64> = self.weights.iter().map(|w| w.sqrt()).collect();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                let a = sq[i] * self.matrix[(i, j)] / sq[j];
                let b = sq[j] * self.matrix[(j, i)] / sq[i];
                worst = worst.max((a - b).abs());
            }
        }
        worst
    }

    pub fn apply(&self, density: &DVector<f64>) -> DVector<f64> {
        &self.matrix * density
    }

    /// Circulant symbol at Fourier mode `l`, i.e. the eigenvalue of `A` on
    /// `cos(lt)`/`sin(lt)`. Exact only when the grid is rotation invariant
    /// (a circle).
    pub fn circulant_symbol(&self, l: usize, params: &[f64]) -> f64 {
        (0..self.len()).map(|j| self.matrix[(0, j)] * (l as f64 * (params[j] - params[0])).cos()).sum()
    }
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Kress weights `R_d` for the node offset `d = |i - j|` on `n` nodes:
/// `∫ ln(4 sin²((t - s)/2)) f(s) ds ≈ Σ_j R_{|i-j|} f(s_j)`.
pub fn log_product_weights(n: usize) -> Vec<f64> {
    let half = n / 2;
    let h = 2.0 * PI / n as f64;
    (0..n)
        .map(|d| {
            let t = h * d as f64;
            let sum: f64 = (1..half).map(|m| (m as f64 * t).cos() / m as f64).sum();
            let alt = if d % 2 == 0 { 1.0 } else { -1.0 };
            -2.0 * h * sum - (PI / (half * half) as f64) * alt
        })
        .collect()
}

/// Reach `κ·r` of the windowed logarithmic split. Over long chords the split
/// terms grow like `I_0(κr)` while the kernel decays like `K_0(κr)`, and the
/// product weights no longer cancel entrywise: high Fourier modes alias.
pub const SPLIT_REACH: f64 = 8.0;

/// Range of `κ·diam(Σ)` over which assembly blends from the global split to
/// the windowed one.
pub const BLEND_RANGE: (f64, f64) = (4.0, 7.0);

fn smooth_step(x: f64) -> f64 {
    let f = |u: f64| if u > 0.0 { (-1.0 / u).exp() } else { 0.0 };
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        f(x) / (f(x) + f(1.0 - x))
    }
}

/// Smooth cutoff: 1 on `[0, b/2]`, 0 on `[b, π]`, `C^∞` in between.
fn window(tau: f64, b: f64) -> f64 {
    smooth_step((b - tau.abs()) / (0.5 * b))
}

/// Log-split window on a grid: parameter half-width `b` and blend weight
/// `θ ∈ [0, 1]`, continuous in `κ`. `None` means the global split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitWindow {
    pub half_width: f64,
    pub blend: f64,
}

pub fn split_window(grid: &BoundaryGrid, kappa: f64) -> Option<SplitWindow> {
    let n = grid.len();
    let mut diameter: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let (p, q) = (grid.points[i], grid.points[j]);
            diameter = diameter.max((p[0] - q[0]).hypot(p[1] - q[1]));
        }
    }
    let (lo, hi) = BLEND_RANGE;
    let blend = smooth_step((kappa * diameter - lo) / (hi - lo));
    if blend == 0.0 {
        return None;
    }
    let s_max = grid.speeds.iter().cloned().fold(0.0, f64::max);
    let h = 2.0 * PI / n as f64;
    Some(SplitWindow { half_width: (SPLIT_REACH / (kappa * s_max)).max(8.0 * h), blend })
}

/// Nyström matrix of the single-layer operator on `grid` at decay rate `κ`.
pub fn assemble_single_layer(grid: &BoundaryGrid, kappa: f64) -> Result<BoundaryOperator> {
    let window = split_window(grid, kappa);
    assemble_single_layer_with_window(grid, kappa, window)
}

/// As [`assemble_single_layer`] with an explicit split window.
pub fn assemble_single_layer_with_window(
    grid: &BoundaryGrid,
    kappa: f64,
    split: Option<SplitWindow>,
) -> Result<BoundaryOperator> {
    let n = grid.len();
    if n % 2 != 0 {
        return Err(Error::Config(format!("single-layer assembly needs an even node count, got {n}")));
    }
    let point = SpectralPoint::from_kappa(kappa)?;
    let log_w = log_product_weights(n);
    let h = 2.0 * PI / n as f64;
    let ln_half_kappa = (0.5 * kappa).ln();
    let inv4pi = 1.0 / (4.0 * PI);
    let inv2pi = 1.0 / (2.0 * PI);
    let weight = |d: usize| match split {
        None => 1.0,
        Some(sw) => {
            let tau = h * d.min(n - d) as f64;
            1.0 - sw.blend * (1.0 - window(tau, sw.half_width))
        }
    };

    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = grid.points[i];
            let ti = grid.params[i];
            (0..n)
                .map(|j| {
                    let sj = grid.speeds[j];
                    if i == j {
                        let regular = inv2pi * sj * (-(0.5 * kappa * sj).ln() - crate::specfun::EULER_GAMMA);
                        let log_part = -inv4pi * sj;
                        return log_w[0] * log_part + h * regular;
                    }
                    let xj = grid.points[j];
                    let r = (xi[0] - xj[0]).hypot(xi[1] - xj[1]);
                    let z = kappa * r;
                    let d = if i > j { i - j } else { j - i };
                    let w = weight(d);
                    let plain = if w < 1.0 { h * inv2pi * sj * crate::specfun::bessel_k0(z) } else { 0.0 };
                    if w == 0.0 {
                        return plain;
                    }
                    let i0 = bessel_i0(z);
                    let log_part = -inv4pi * i0 * sj;
                    let sin_half = (0.5 * (ti - grid.params[j])).sin();
                    let smooth_log = (r * r / (4.0 * sin_half * sin_half)).ln();
                    let regular =
                        inv2pi * sj * (k0_regular_part(z) - i0 * ln_half_kappa - 0.5 * i0 * smooth_log);
                    w * (log_w[d] * log_part + h * regular) + (1.0 - w) * plain
                })
                .collect()
        })
        .collect();
    let matrix = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
    Ok(BoundaryOperator { matrix, weights: grid.weights.clone(), kind: OperatorKind::SingleLayer, point })
}

/// Mode values of the boundary operators on a circle or sphere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeWeylValues {
    pub order: u32,
    /// interior Neumann-to-Dirichlet map
    pub m_i: f64,
    /// exterior Neumann-to-Dirichlet map
    pub m_e: f64,
    /// single layer, `(m_i^{-1} + m_e^{-1})^{-1}`
    pub m_tilde: f64,
    /// `m_i + m_e`
    pub m_hat: f64,
}

/// `λ`-derivatives of the mode values. For a Weyl function these equal the
/// squared norms `‖γ(λ) e_l‖²` of the corresponding γ-field columns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeWeylDerivatives {
    pub order: u32,
    pub dm_i: f64,
    pub dm_e: f64,
    pub dm_tilde: f64,
    pub dm_hat: f64,
}

fn assemble_modes(l: u32, m_i: f64, m_e: f64) -> ModeWeylValues {
    ModeWeylValues { order: l, m_i, m_e, m_tilde: 1.0 / (1.0 / m_i + 1.0 / m_e), m_hat: m_i + m_e }
}

fn check_mode_args(kappa: f64, radius: f64) -> Result<()> {
    if !(kappa > 0.0) || !(radius > 0.0) {
        return Err(Error::Domain(format!("mode values need κ > 0 and R > 0, got κ = {kappa}, R = {radius}")));
    }
    Ok(())
}

/// Circle of radius `R` in the plane.
pub fn mode_weyl_circle(l: u32, kappa: f64, radius: f64) -> Result<ModeWeylValues> {
    check_mode_args(kappa, radius)?;
    let r = bessel_ik_ratios(l, kappa * radius)?;
    Ok(assemble_modes(l, 1.0 / (kappa * r.di_over_i), -1.0 / (kappa * r.dk_over_k)))
}

/// Sphere of radius `R` in R³.
pub fn mode_weyl_sphere(l: u32, kappa: f64, radius: f64) -> Result<ModeWeylValues> {
    check_mode_args(kappa, radius)?;
    let r = sph_bessel_ik_ratios(l, kappa * radius)?;
    Ok(assemble_modes(l, 1.0 / (kappa * r.di_over_i), -1.0 / (kappa * r.dk_over_k)))
}

/// Derivative of a logarithmic derivative `f = y'/y` of a solution of
/// `x² y'' + (n-1) x y' - (x² + c) y = 0`.
fn log_derivative_slope(f: f64, x: f64, centrifugal: f64, first_order: f64) -> f64 {
    1.0 + centrifugal / (x * x) - first_order * f / x - f * f
}

fn mode_derivatives(dim: u32, l: u32, kappa: f64, radius: f64) -> Result<ModeWeylDerivatives> {
    check_mode_args(kappa, radius)?;
    let x = kappa * radius;
    let (fi, fk, c, p) = if dim == 2 {
        let r = bessel_ik_ratios(l, x)?;
        (r.di_over_i, r.dk_over_k, (l * l) as f64, 1.0)
    } else {
        let r = sph_bessel_ik_ratios(l, x)?;
        (r.di_over_i, r.dk_over_k, (l * (l + 1)) as f64, 2.0)
    };
    let dfi = log_derivative_slope(fi, x, c, p);
    let dfk = log_derivative_slope(fk, x, c, p);
    // m_i = 1/(κ f_i(κR)), m_e = -1/(κ f_k(κR)); d/dκ then dλ = -2κ dκ
    let dmi_dk = -1.0 / (kappa * kappa * fi) - radius * dfi / (kappa * fi * fi);
    let dme_dk = 1.0 / (kappa * kappa * fk) + radius * dfk / (kappa * fk * fk);
    let to_lambda = -1.0 / (2.0 * kappa);
    let m_i = 1.0 / (kappa * fi);
    let m_e = -1.0 / (kappa * fk);
    let dmi = dmi_dk * to_lambda;
    let dme = dme_dk * to_lambda;
    // m̃ = m_i m_e / (m_i + m_e)
    let s = m_i + m_e;
    let dmt = (dmi * m_e * m_e + dme * m_i * m_i) / (s * s);
    Ok(ModeWeylDerivatives { order: l, dm_i: dmi, dm_e: dme, dm_tilde: dmt, dm_hat: dmi + dme })
}

pub fn mode_weyl_circle_derivatives(l: u32, kappa: f64, radius: f64) -> Result<ModeWeylDerivatives> {
    mode_derivatives(2, l, kappa, radius)
}

pub fn mode_weyl_sphere_derivatives(l: u32, kappa: f64, radius: f64) -> Result<ModeWeylDerivatives> {
    mode_derivatives(3, l, kappa, radius)
}

/// Relative residuals of `M̃ = (M_i^{-1} + M_e^{-1})^{-1}` and `M̂ = M_i + M_e`
/// for mode `l`, with both sides of each identity built from independent
/// Bessel products: `M̃ = R I_l K_l` and `M̂ = -1/(κ²R I_l' K_l')` on the
/// circle, `M̃ = κR² i_l k_l` and `M̂ = -1/(κ³R² i_l' k_l')` on the sphere.
pub fn weyl_identity_residuals(dimension: u32, l: u32, kappa: f64, radius: f64) -> Result<(f64, f64)> {
    let x = kappa * radius;
    let (m, tilde, hat) = match dimension {
        2 => {
            let p = bessel_ik(l, x)?;
            (mode_weyl_circle(l, kappa, radius)?, radius * p.i * p.k, -1.0 / (kappa * x * p.di * p.dk))
        }
        3 => {
            let p = sph_bessel_ik(l, x)?;
            (mode_weyl_sphere(l, kappa, radius)?, kappa * radius * radius * p.i * p.k, -1.0 / (kappa * x * x * p.di * p.dk))
        }
        _ => return Err(Error::Domain(format!("dimension must be 2 or 3, got {dimension}"))),
    };
    let from_parts = 1.0 / (1.0 / m.m_i + 1.0 / m.m_e);
    Ok(((from_parts - tilde).abs() / tilde.abs(), (m.m_i + m.m_e - hat).abs() / hat.abs()))
}

/// Geometry together with the backend that discretizes it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "snake_case")]
pub enum Geometry {
    /// Nyström on a closed curve with `nodes` quadrature points.
    Curve { curve: ClosedCurve, nodes: usize },
    /// Fourier modes `0..=max_order` on a circle.
    CircleModes { radius: f64, max_order: u32 },
    /// Spherical-harmonic degrees `0..=max_order` on a sphere.
    SphereModes { radius: f64, max_order: u32 },
}

impl Geometry {
    pub fn dimension(&self) -> u32 {
        match self {
            Geometry::SphereModes { .. } => 3,
            _ => 2,
        }
    }

    pub fn is_separable(&self) -> bool {
        !matches!(self, Geometry::Curve { .. })
    }

    pub fn radius(&self) -> Option<f64> {
        match self {
            Geometry::Curve { curve, .. } => curve.circle_radius(),
            Geometry::CircleModes { radius, .. } | Geometry::SphereModes { radius, .. } => Some(*radius),
        }
    }

    /// Degeneracy of mode `l`.
    pub fn mode_multiplicity(&self, l: u32) -> usize {
        match self {
            Geometry::SphereModes { .. } => (2 * l + 1) as usize,
            _ if l == 0 => 1,
            _ => 2,
        }
    }

    pub fn mode_values(&self, l: u32, kappa: f64) -> Result<ModeWeylValues> {
        match *self {
            Geometry::CircleModes { radius, .. } => mode_weyl_circle(l, kappa, radius),
            Geometry::SphereModes { radius, .. } => mode_weyl_sphere(l, kappa, radius),
            Geometry::Curve { .. } => Err(Error::Unsupported("mode values requested on a Nyström geometry".into())),
        }
    }

    pub fn mode_derivatives(&self, l: u32, kappa: f64) -> Result<ModeWeylDerivatives> {
        match *self {
            Geometry::CircleModes { radius, .. } => mode_weyl_circle_derivatives(l, kappa, radius),
            Geometry::SphereModes { radius, .. } => mode_weyl_sphere_derivatives(l, kappa, radius),
            Geometry::Curve { .. } => Err(Error::Unsupported("mode values requested on a Nyström geometry".into())),
        }
    }

    pub fn max_order(&self) -> Option<u32> {
        match *self {
            Geometry::CircleModes { max_order, .. } | Geometry::SphereModes { max_order, .. } => Some(max_order),
            Geometry::Curve { .. } => None,
        }
    }

    pub fn grid(&self) -> Result<BoundaryGrid> {
        match *self {
            Geometry::Curve { curve, nodes } => build_grid(curve, nodes),
            _ => Err(Error::Unsupported("separable geometries have no boundary grid".into())),
        }
    }
}

/// Which Weyl function a mode-diagonal operator carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeylKind {
    /// `M̃`, the single layer (δ interactions).
    Tilde,
    /// `M̂ = M_i + M_e` (δ′ interactions).
    Hat,
}

/// Diagonal boundary operator on a separable geometry: one value per mode,
/// repeated `multiplicity` times in the expanded basis.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeDiagonal {
    pub kind: WeylKind,
    pub orders: Vec<u32>,
    pub values: Vec<f64>,
    pub multiplicities: Vec<usize>,
}

impl ModeDiagonal {
    pub fn expanded_len(&self) -> usize {
        self.multiplicities.iter().sum()
    }

    pub fn expanded(&self) -> Vec<f64> {
        self.values
            .iter()
            .zip(&self.multiplicities)
            .flat_map(|(v, m)| std::iter::repeat(*v).take(*m))
            .collect()
    }
}

/// Symmetric eigendecomposition, eigenvalues descending.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: Option<DMatrix<f64>>,
}

pub fn sym_eigen_desc(m: DMatrix<f64>, want_vectors: bool) -> Result<SymEigen> {
    let n = m.nrows();
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Eigen("matrix has non-finite entries".into()));
    }
    let eig = SymmetricEigen::new(m);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = want_vectors.then(|| DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, idx[c])]));
    Ok(SymEigen { values, vectors })
}

/// Backend-independent handle to `M̃(λ)` or `M̂(λ)`.
#[derive(Debug, Clone)]
pub enum WeylOperator {
    Dense(BoundaryOperator),
    Modes(ModeDiagonal),
}

impl WeylOperator {
    /// Apply to a coefficient vector: density samples for the dense backend,
    /// expanded mode coefficients for the diagonal one.
    pub fn apply(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        match self {
            WeylOperator::Dense(op) => {
                if v.len() != op.len() {
                    return Err(Error::Config(format!("vector length {} != {}", v.len(), op.len())));
                }
                Ok(op.apply(v))
            }
            WeylOperator::Modes(d) => {
                let diag = d.expanded();
                if v.len() != diag.len() {
                    return Err(Error::Config(format!("vector length {} != {}", v.len(), diag.len())));
                }
                Ok(DVector::from_iterator(v.len(), v.iter().zip(&diag).map(|(a, b)| a * b)))
            }
        }
    }

    /// Eigenvalues (descending) of the self-adjoint operator.
    pub fn sym_eigendecompose(&self, want_vectors: bool) -> Result<SymEigen> {
        match self {
            WeylOperator::Dense(op) => sym_eigen_desc(op.symmetric_form(), want_vectors),
            WeylOperator::Modes(d) => {
                let mut values = d.expanded();
                values.sort_by(|a, b| b.total_cmp(a));
                Ok(SymEigen { values, vectors: None })
            }
        }
    }
}

/// Dispatch: Nyström on curves, diagonal modes on circle/sphere. `M̂` is
/// only available on the separable backends.
pub fn weyl_operator(geometry: &Geometry, kind: WeylKind, point: SpectralPoint) -> Result<WeylOperator> {
    let kappa = point.kappa();
    match (geometry, kind) {
        (Geometry::Curve { .. }, WeylKind::Tilde) => {
            let grid = geometry.grid()?;
            Ok(WeylOperator::Dense(assemble_single_layer(&grid, kappa)?))
        }
        (Geometry::Curve { .. }, WeylKind::Hat) => Err(Error::Unsupported(
            "δ′ interactions are only supported on the circle/sphere mode backends".into(),
        )),
        (_, kind) => {
            let max_order = geometry.max_order().unwrap_or(0);
            let mut diag = ModeDiagonal { kind, orders: vec![], values: vec![], multiplicities: vec![] };
            for l in 0..=max_order {
                let m = geometry.mode_values(l, kappa)?;
                diag.orders.push(l);
                diag.values.push(match kind {
                    WeylKind::Tilde => m.m_tilde,
                    WeylKind::Hat => m.m_hat,
                });
                diag.multiplicities.push(geometry.mode_multiplicity(l));
            }
            Ok(WeylOperator::Modes(diag))
        }
    }
}

/// Convenience alias matching the δ dispatch.
pub fn weyl_tilde_matrix(geometry: &Geometry, point: SpectralPoint) -> Result<WeylOperator> {
    weyl_operator(geometry, WeylKind::Tilde, point)
}
