//! Negative eigenvalues of δ and δ′ shell operators via the
//! Birman–Schwinger principle: `λ < 0` is an eigenvalue of the δ operator iff
//! `1` is an eigenvalue of `αM̃(λ)`, and of the δ′ operator iff `1` is an
//! eigenvalue of `β^{-1}M̂(λ)`, with equal multiplicities.
//!
//! The solver scans a logarithmic lattice in `κ = √(-λ)`, brackets sign
//! changes of `μ_j(κ) - 1` for every branch `μ_j`, and bisects. On the mode
//! backends each mode is its own branch; on curves the `j`-th largest
//! eigenvalue is used, which is continuous in `κ` even where branches cross.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boundary_ops::{assemble_single_layer, sym_eigen_desc, Geometry};
use crate::error::{Error, Result};
use crate::geometry::BoundaryGrid;
use crate::kernels::SpectralPoint;

/// Strength function of a δ interaction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Strength {
    Constant(f64),
    /// One value per boundary node (curves only).
    Sampled(Vec<f64>),
}

impl Strength {
    pub fn max_abs(&self) -> f64 {
        match self {
            Strength::Constant(a) => a.abs(),
            Strength::Sampled(v) => v.iter().fold(0.0, |m, a| m.max(a.abs())),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.max_abs() == 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InteractionSpec {
    Delta { alpha: Strength },
    DeltaPrime { beta: f64 },
}

/// Smallest admissible `|β|`; `1/β` must stay bounded.
pub const BETA_MIN: f64 = 1e-8;

impl InteractionSpec {
    pub fn delta(alpha: f64) -> Self {
        InteractionSpec::Delta { alpha: Strength::Constant(alpha) }
    }

    pub fn delta_sampled(alpha: Vec<f64>) -> Self {
        InteractionSpec::Delta { alpha: Strength::Sampled(alpha) }
    }

    pub fn delta_prime(beta: f64) -> Self {
        InteractionSpec::DeltaPrime { beta }
    }

    pub fn validate(&self, geometry: &Geometry) -> Result<()> {
        match self {
            InteractionSpec::Delta { alpha } => match alpha {
                Strength::Constant(a) if !a.is_finite() => Err(Error::Config(format!("α must be finite, got {a}"))),
                Strength::Constant(_) => Ok(()),
                Strength::Sampled(v) => {
                    let Geometry::Curve { nodes, .. } = geometry else {
                        return Err(Error::Unsupported("sampled α is only supported on curves".into()));
                    };
                    if v.len() != *nodes {
                        return Err(Error::Config(format!("{} α samples for {nodes} nodes", v.len())));
                    }
                    if v.iter().any(|a| !a.is_finite()) {
                        return Err(Error::Config("α samples must be finite".into()));
                    }
                    Ok(())
                }
            },
            InteractionSpec::DeltaPrime { beta } => {
                if !beta.is_finite() || beta.abs() < BETA_MIN {
                    return Err(Error::Config(format!("|β| must be at least {BETA_MIN:e}, got {beta}")));
                }
                if !geometry.is_separable() {
                    return Err(Error::Unsupported(
                        "δ′ interactions are only supported on the circle/sphere mode backends".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    pub fn is_trivial(&self) -> bool {
        matches!(self, InteractionSpec::Delta { alpha } if alpha.is_zero())
    }
}

/// One eigenvalue of the Birman–Schwinger operator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BsEigenvalue {
    pub value: f64,
    pub multiplicity: usize,
    pub mode: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundState {
    pub lambda: f64,
    pub kappa: f64,
    pub multiplicity: usize,
    /// smallest `|1 - μ|` over the Birman–Schwinger spectrum at `λ*`
    pub residual: f64,
    pub mode: Option<u32>,
    /// density samples spanning `ker(I - αM̃(λ*))`; empty on mode backends,
    /// where the kernel is spanned by the harmonics of `mode`
    #[serde(skip)]
    pub eigendensities: Vec<DVector<f64>>,
}

/// Scale `1/R` (or `2π/perimeter`) used for the distance from `λ = 0`.
pub fn kappa_scale(geometry: &Geometry) -> Result<f64> {
    if let Some(r) = geometry.radius() {
        return Ok(1.0 / r);
    }
    let grid = geometry.grid()?;
    Ok(2.0 * std::f64::consts::PI / grid.perimeter())
}

/// `ε = 1e-6·max(1, κ_scale²)`.
pub fn default_epsilon(geometry: &Geometry) -> Result<f64> {
    let k = kappa_scale(geometry)?;
    Ok(1e-6 * (k * k).max(1.0))
}

/// A bracket `[λ_min, -ε]` that contains every bound state: deeper than
/// `-α_max²` (δ) or `-16/β²` (δ′), widened by the geometry scale.
pub fn default_bracket(spec: &InteractionSpec, geometry: &Geometry) -> Result<(f64, f64)> {
    let k = kappa_scale(geometry)?;
    let depth = match spec {
        InteractionSpec::Delta { alpha } => alpha.max_abs().powi(2),
        InteractionSpec::DeltaPrime { beta } => 16.0 / (beta * beta),
    };
    Ok((-(1.0 + depth + 4.0 * k * k), -default_epsilon(geometry)?))
}

struct CurveContext {
    grid: BoundaryGrid,
    alpha: Option<Vec<f64>>,
    constant: f64,
}

impl CurveContext {
    fn new(geometry: &Geometry, alpha: &Strength) -> Result<Self> {
        let grid = geometry.grid()?;
        Ok(match alpha {
            Strength::Constant(a) => Self { grid, alpha: None, constant: *a },
            Strength::Sampled(v) => Self { grid, alpha: Some(v.clone()), constant: 0.0 },
        })
    }

    /// Eigenvalues (descending) of `S^{1/2} α S^{1/2}` with
    /// `S = W^{1/2} A W^{-1/2}`, plus the data needed to recover densities.
    fn spectrum(&self, kappa: f64, want_vectors: bool) -> Result<(Vec<f64>, Option<DensityMap>)> {
        let op = assemble_single_layer(&self.grid, kappa)?;
        let s = op.symmetric_form();
        match &self.alpha {
            None => {
                let a = self.constant;
                let eig = sym_eigen_desc(s, want_vectors)?;
                let mut values: Vec<f64> = eig.values.iter().map(|m| a * m).collect();
                values.sort_by(|x, y| y.total_cmp(x));
                let map = match (eig.vectors, want_vectors) {
                    (Some(v), true) => {
                        // order matches `values` when a ≥ 0, reversed otherwise
                        let n = v.ncols();
                        let v = if a >= 0.0 { v } else { DMatrix::from_fn(n, n, |r, c| v[(r, n - 1 - c)]) };
                        Some(DensityMap { vectors: v, transform: None, weights: op.weights.clone() })
                    }
                    _ => None,
                };
                Ok((values, map))
            }
            Some(alpha) => {
                let eig = sym_eigen_desc(s, true)?;
                let v = eig.vectors.expect("vectors requested");
                let n = v.nrows();
                let sqrt_vals: Vec<f64> = eig.values.iter().map(|m| m.max(0.0).sqrt()).collect();
                let root = DMatrix::from_fn(n, n, |r, c| {
                    (0..n).map(|k| v[(r, k)] * sqrt_vals[k] * v[(c, k)]).sum::<f64>()
                });
                let mut b = DMatrix::from_fn(n, n, |r, c| {
                    (0..n).map(|k| root[(r, k)] * alpha[k] * root[(k, c)]).sum::<f64>()
                });
                crate::boundary_ops::symmetrize(&mut b);
                let eig = sym_eigen_desc(b, want_vectors)?;
                let map = eig.vectors.map(|vectors| DensityMap {
                    vectors,
                    transform: Some(DMatrix::from_fn(n, n, |r, c| alpha[r] * root[(r, c)])),
                    weights: op.weights.clone(),
                });
                Ok((eig.values, map))
            }
        }
    }
}

/// Maps eigenvectors `u` of the symmetrized problem to densities
/// `φ = W^{-1/2} α S^{1/2} u` in the kernel of `I - αA`.
struct DensityMap {
    vectors: DMatrix<f64>,
    transform: Option<DMatrix<f64>>,
    weights: Vec<f64>,
}

impl DensityMap {
    fn density(&self, column: usize) -> DVector<f64> {
        let u = self.vectors.column(column).into_owned();
        // constant α: u is already an eigenvector of S, so S^{1/2}u ∝ u
        let w = match &self.transform {
            Some(t) => t * u,
            None => u,
        };
        let mut phi = DVector::from_iterator(w.len(), w.iter().zip(&self.weights).map(|(x, q)| x / q.sqrt()));
        let norm = phi.norm();
        if norm > 0.0 {
            phi /= norm;
        }
        phi
    }
}

fn mode_bs_value(spec: &InteractionSpec, geometry: &Geometry, l: u32, kappa: f64) -> Result<f64> {
    let m = geometry.mode_values(l, kappa)?;
    Ok(match spec {
        InteractionSpec::Delta { alpha: Strength::Constant(a) } => a * m.m_tilde,
        InteractionSpec::Delta { .. } => unreachable!("validated"),
        InteractionSpec::DeltaPrime { beta } => m.m_hat / beta,
    })
}

/// Birman–Schwinger eigenvalues at `λ`, descending.
pub fn bs_eigenvalues(point: SpectralPoint, spec: &InteractionSpec, geometry: &Geometry) -> Result<Vec<BsEigenvalue>> {
    spec.validate(geometry)?;
    let kappa = point.kappa();
    match (geometry, spec) {
        (Geometry::Curve { .. }, InteractionSpec::Delta { alpha }) => {
            let ctx = CurveContext::new(geometry, alpha)?;
            let (values, _) = ctx.spectrum(kappa, false)?;
            Ok(values.into_iter().map(|value| BsEigenvalue { value, multiplicity: 1, mode: None }).collect())
        }
        _ => {
            let mut out = Vec::new();
            for l in 0..=geometry.max_order().unwrap_or(0) {
                out.push(BsEigenvalue {
                    value: mode_bs_value(spec, geometry, l, kappa)?,
                    multiplicity: geometry.mode_multiplicity(l),
                    mode: Some(l),
                });
            }
            out.sort_by(|a, b| b.value.total_cmp(&a.value));
            Ok(out)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundStateCount {
    pub count: usize,
    /// first mode whose Birman–Schwinger value at `-ε` is at most one;
    /// no mode from here on can produce a bound state
    pub mode_cutoff: Option<u32>,
}

/// Number of Birman–Schwinger eigenvalues above one at `λ = -ε`, with
/// multiplicity.
pub fn count_bound_states(spec: &InteractionSpec, geometry: &Geometry, epsilon: f64) -> Result<BoundStateCount> {
    if !(epsilon > 0.0) {
        return Err(Error::Domain(format!("ε must be positive, got {epsilon}")));
    }
    spec.validate(geometry)?;
    let point = SpectralPoint::from_lambda(-epsilon)?;
    if spec.is_trivial() {
        return Ok(BoundStateCount { count: 0, mode_cutoff: geometry.is_separable().then_some(0) });
    }
    let eigs = bs_eigenvalues(point, spec, geometry)?;
    let count = eigs.iter().filter(|e| e.value > 1.0).map(|e| e.multiplicity).sum();
    let mode_cutoff = if geometry.is_separable() {
        let max = geometry.max_order().unwrap_or(0);
        let mut cut = max + 1;
        for l in 0..=max {
            if mode_bs_value(spec, geometry, l, point.kappa())? <= 1.0 {
                cut = l;
                break;
            }
        }
        if cut > max {
            log::warn!("every mode up to {max} exceeds one at λ = -{epsilon:e}; raise the mode cutoff");
        }
        Some(cut)
    } else {
        None
    };
    Ok(BoundStateCount { count, mode_cutoff })
}

/// Lattice controls for [`find_bound_states`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    pub points_per_decade: usize,
    /// number of consecutive refinements that must leave the crossing count unchanged
    pub stable_refinements: usize,
    pub max_refinements: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self { points_per_decade: 64, stable_refinements: 2, max_refinements: 6 }
    }
}

/// One branch sample: descending values on curves, one value per mode on
/// separable backends.
type Sample = Vec<f64>;

struct Evaluator<'a> {
    spec: &'a InteractionSpec,
    geometry: &'a Geometry,
    curve: Option<CurveContext>,
}

impl Evaluator<'_> {
    fn sample(&self, kappa: f64) -> Result<Sample> {
        match &self.curve {
            Some(ctx) => Ok(ctx.spectrum(kappa, false)?.0),
            None => (0..=self.geometry.max_order().unwrap_or(0))
                .map(|l| mode_bs_value(self.spec, self.geometry, l, kappa))
                .collect(),
        }
    }

    fn branch(&self, j: usize, kappa: f64) -> Result<f64> {
        match &self.curve {
            Some(ctx) => Ok(ctx.spectrum(kappa, false)?.0[j]),
            None => mode_bs_value(self.spec, self.geometry, j as u32, kappa),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Crossing {
    branch: usize,
    lo: f64,
    hi: f64,
}

fn crossings(kappas: &[f64], samples: &[Sample]) -> Vec<Crossing> {
    let mut out = Vec::new();
    let branches = samples.iter().map(|s| s.len()).min().unwrap_or(0);
    for j in 0..branches {
        for i in 1..kappas.len() {
            let a = samples[i - 1][j] - 1.0;
            let b = samples[i][j] - 1.0;
            if (a > 0.0) != (b > 0.0) {
                out.push(Crossing { branch: j, lo: kappas[i - 1], hi: kappas[i] });
            }
        }
    }
    out
}

fn evaluate_all(eval: &Evaluator, kappas: &[f64]) -> Result<Vec<Sample>> {
    kappas.par_iter().map(|&k| eval.sample(k)).collect()
}

fn bisect(eval: &Evaluator, c: Crossing) -> Result<f64> {
    let (mut lo, mut hi) = (c.lo, c.hi);
    let mut f_lo = eval.branch(c.branch, lo)? - 1.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
        let f_mid = eval.branch(c.branch, mid)? - 1.0;
        if f_mid == 0.0 {
            return Ok(mid);
        }
        if (f_mid > 0.0) == (f_lo > 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// All bound states with `λ* ∈ [λ_min, λ_max]`, sorted ascending in `λ*`.
pub fn find_bound_states(
    spec: &InteractionSpec,
    geometry: &Geometry,
    bracket: (f64, f64),
    tol: f64,
    options: SearchOptions,
) -> Result<Vec<BoundState>> {
    let (lambda_min, lambda_max) = bracket;
    if !(lambda_max < 0.0) || !(lambda_min < lambda_max) || !lambda_min.is_finite() {
        return Err(Error::Domain(format!(
            "search bracket [{lambda_min}, {lambda_max}] must satisfy λ_min < λ_max < 0"
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::Config(format!("tolerance must be positive, got {tol}")));
    }
    spec.validate(geometry)?;
    if spec.is_trivial() {
        return Ok(Vec::new());
    }
    let curve = match (geometry, spec) {
        (Geometry::Curve { .. }, InteractionSpec::Delta { alpha }) => Some(CurveContext::new(geometry, alpha)?),
        _ => None,
    };
    let is_curve = curve.is_some();
    let eval = Evaluator { spec, geometry, curve };

    let k_lo = (-lambda_max).sqrt();
    let k_hi = (-lambda_min).sqrt();
    let decades = (k_hi / k_lo).log10();
    let intervals = ((decades * options.points_per_decade as f64).ceil() as usize).max(2);
    let mut kappas: Vec<f64> = (0..=intervals).map(|i| k_lo * (k_hi / k_lo).powf(i as f64 / intervals as f64)).collect();
    let mut samples = evaluate_all(&eval, &kappas)?;
    let mut found = crossings(&kappas, &samples);
    let mut stable = 0;
    let mut level = 0;
    while stable < options.stable_refinements {
        if level >= options.max_refinements {
            let (lo, hi) = found
                .iter()
                .fold((lambda_min, lambda_max), |(lo, hi), c| (lo.max(-c.hi * c.hi), hi.min(-c.lo * c.lo)));
            return Err(Error::BranchAmbiguity { lo: lo.min(hi), hi: hi.max(lo) });
        }
        let mids: Vec<f64> = kappas.windows(2).map(|w| (w[0] * w[1]).sqrt()).collect();
        let mut mid_samples = evaluate_all(&eval, &mids)?;
        let mut k2 = Vec::with_capacity(kappas.len() + mids.len());
        let mut s2 = Vec::with_capacity(k2.capacity());
        for i in 0..mids.len() {
            k2.push(kappas[i]);
            s2.push(std::mem::take(&mut samples[i]));
            k2.push(mids[i]);
            s2.push(std::mem::take(&mut mid_samples[i]));
        }
        k2.push(*kappas.last().unwrap());
        s2.push(samples.pop().unwrap());
        let refined = crossings(&k2, &s2);
        if refined.len() == found.len() {
            stable += 1;
        } else {
            stable = 0;
        }
        kappas = k2;
        samples = s2;
        found = refined;
        level += 1;
    }

    let roots: Vec<(usize, f64)> =
        found.par_iter().map(|c| bisect(&eval, *c).map(|k| (c.branch, k))).collect::<Result<_>>()?;
    let mut states = Vec::new();
    if is_curve {
        let mut sorted = roots;
        sorted.sort_by(|a, b| a.1.total_cmp(&b.1));
        let mut clusters: Vec<Vec<(usize, f64)>> = Vec::new();
        for r in sorted {
            match clusters.last_mut() {
                Some(c) if (r.1 - c[0].1).abs() <= 1e-8 * r.1 => c.push(r),
                _ => clusters.push(vec![r]),
            }
        }
        let ctx = eval.curve.as_ref().expect("curve backend");
        for cluster in clusters {
            let kappa = cluster.iter().map(|r| r.1).sum::<f64>() / cluster.len() as f64;
            let (values, map) = ctx.spectrum(kappa, true)?;
            let near: Vec<usize> = (0..values.len()).filter(|&j| (1.0 - values[j]).abs() < tol).collect();
            let residual = values.iter().map(|v| (1.0 - v).abs()).fold(f64::INFINITY, f64::min);
            let multiplicity = near.len().max(cluster.len());
            let map = map.expect("vectors requested");
            let eigendensities = if near.len() >= cluster.len() {
                near.iter().map(|&j| map.density(j)).collect()
            } else {
                cluster.iter().map(|r| map.density(r.0)).collect()
            };
            states.push(BoundState { lambda: -kappa * kappa, kappa, multiplicity, residual, mode: None, eigendensities });
        }
    } else {
        for (l, kappa) in roots {
            let residual = (1.0 - eval.branch(l, kappa)?).abs();
            states.push(BoundState {
                lambda: -kappa * kappa,
                kappa,
                multiplicity: geometry.mode_multiplicity(l as u32),
                residual,
                mode: Some(l as u32),
                eigendensities: Vec::new(),
            });
        }
    }
    for s in &states {
        if !(s.residual < tol) {
            return Err(Error::NoConvergence(format!(
                "bound state at λ = {} has residual {:e} ≥ {tol:e}",
                s.lambda, s.residual
            )));
        }
    }
    states.sort_by(|a, b| a.lambda.total_cmp(&b.lambda).then(a.mode.cmp(&b.mode)));
    Ok(states)
}

/// [`find_bound_states`] with the default bracket and lattice.
pub fn find_bound_states_default(spec: &InteractionSpec, geometry: &Geometry, tol: f64) -> Result<Vec<BoundState>> {
    let bracket = default_bracket(spec, geometry)?;
    find_bound_states(spec, geometry, bracket, tol, SearchOptions::default())
}
