//! Finite-matrix checks of the resolvent algebra behind the power-difference
//! results: the conjugation identity `E_λ D₁(λ₀) F_λ = D₁(λ)`, the telescoping
//! sum for `(H - λ)^{-m} - (K - λ)^{-m}` and the exponent bookkeeping for
//! factorized differences.

use nalgebra::{Complex, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::krein_schatten::{FitRange, SingularValueProfile};

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;

/// Largest condition number accepted for `H - λ` and `K - λ`.
pub const MAX_CONDITION: f64 = 1e8;

/// Seed of the random identity trials.
pub const DEFAULT_SEED: u64 = 0x5eed_2024;

fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

fn condition(m: &CMatrix) -> f64 {
    let s = m.clone().singular_values();
    s.max() / s.min()
}

/// `(M - λ)^{-1}`, refusing `λ` in or too close to the spectrum.
pub fn resolvent(m: &CMatrix, lambda: C64) -> Result<CMatrix> {
    let shifted = m - identity(m.nrows()) * lambda;
    let cond = condition(&shifted);
    if !(cond < MAX_CONDITION) {
        return Err(Error::Resolvent(format!("λ = {lambda} is too close to the spectrum (condition {cond:e})")));
    }
    shifted.try_inverse().ok_or_else(|| Error::Resolvent(format!("M - λ is singular at λ = {lambda}")))
}

fn power(m: &CMatrix, e: usize) -> CMatrix {
    (0..e).fold(identity(m.nrows()), |acc, _| acc * m)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixPair {
    pub h: CMatrix,
    pub k: CMatrix,
    pub lambda0: C64,
}

impl MatrixPair {
    pub fn new(h: CMatrix, k: CMatrix, lambda0: C64) -> Result<Self> {
        if !h.is_square() || h.shape() != k.shape() {
            return Err(Error::Config(format!("H {:?} and K {:?} must be square of one size", h.shape(), k.shape())));
        }
        resolvent(&h, lambda0)?;
        resolvent(&k, lambda0)?;
        Ok(Self { h, k, lambda0 })
    }

    pub fn dim(&self) -> usize {
        self.h.nrows()
    }

    /// `D₁(λ) = (H - λ)^{-1} - (K - λ)^{-1}`.
    pub fn difference(&self, lambda: C64) -> Result<CMatrix> {
        Ok(resolvent(&self.h, lambda)? - resolvent(&self.k, lambda)?)
    }

    /// `(H - λ)^{-l} - (K - λ)^{-l}` from explicit powers.
    pub fn power_difference(&self, lambda: C64, l: usize) -> Result<CMatrix> {
        Ok(power(&resolvent(&self.h, lambda)?, l) - power(&resolvent(&self.k, lambda)?, l))
    }

    /// `T_{m,k}(λ) = (H - λ)^{-(m-k-1)} D₁(λ) (K - λ)^{-k}`.
    pub fn t_term(&self, lambda: C64, m: usize, k: usize) -> Result<CMatrix> {
        if k >= m {
            return Err(Error::Config(format!("T_{{m,k}} needs k < m, got m = {m}, k = {k}")));
        }
        let rh = resolvent(&self.h, lambda)?;
        let rk = resolvent(&self.k, lambda)?;
        Ok(power(&rh, m - k - 1) * (&rh - &rk) * power(&rk, k))
    }
}

/// `‖E_λ D₁(λ₀) F_λ - D₁(λ)‖_F` with `E_λ = I + (λ - λ₀)(H - λ)^{-1}` and
/// `F_λ = I + (λ - λ₀)(K - λ)^{-1}`.
pub fn conjugation_identity_residual(pair: &MatrixPair, lambda: C64) -> Result<f64> {
    let n = pair.dim();
    let shift = lambda - pair.lambda0;
    let rh = resolvent(&pair.h, lambda)?;
    let rk = resolvent(&pair.k, lambda)?;
    let e = identity(n) + &rh * shift;
    let f = identity(n) + &rk * shift;
    let d0 = pair.difference(pair.lambda0)?;
    Ok((e * d0 * f - (rh - rk)).norm())
}

/// `‖(H - λ)^{-m} - (K - λ)^{-m} - Σ_k T_{m,k}(λ)‖_F` for `1 ≤ m ≤ 6`.
pub fn telescoping_residual(pair: &MatrixPair, lambda: C64, m: usize) -> Result<f64> {
    if !(1..=6).contains(&m) {
        return Err(Error::Config(format!("telescoping order must be in 1..=6, got {m}")));
    }
    let direct = pair.power_difference(lambda, m)?;
    let mut sum = CMatrix::zeros(pair.dim(), pair.dim());
    for k in 0..m {
        sum += pair.t_term(lambda, m, k)?;
    }
    Ok((direct - sum).norm())
}

fn random_complex(rng: &mut ChaCha8Rng, n: usize) -> CMatrix {
    CMatrix::from_fn(n, n, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
}

/// Haar-like unitary from the QR factor of a random complex matrix.
pub fn random_unitary(rng: &mut ChaCha8Rng, n: usize) -> CMatrix {
    random_complex(rng, n).qr().q()
}

/// Hermitian `U diag(e) U*` with eigenvalues drawn from `[lo, hi]`.
pub fn random_hermitian(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> CMatrix {
    let u = random_unitary(rng, n);
    let e = DVector::from_fn(n, |_, _| C64::new(rng.random_range(lo..hi), 0.0));
    let m = &u * CMatrix::from_diagonal(&e) * u.adjoint();
    (&m + m.adjoint()) * C64::new(0.5, 0.0)
}

/// Hermitian pair with spectra in `[0.5, 3]` and `λ₀ = -1`, so every
/// resolvent used by the trials has condition number below 10.
pub fn random_pair(seed: u64, n: usize) -> Result<MatrixPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = random_hermitian(&mut rng, n, 0.5, 3.0);
    let k = random_hermitian(&mut rng, n, 0.5, 3.0);
    MatrixPair::new(h, k, C64::new(-1.0, 0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgebraReport {
    pub seed: u64,
    pub trials: usize,
    pub dim: usize,
    pub conjugation_max: f64,
    pub telescoping_max: f64,
    pub max_order: usize,
}

/// Runs `trials` seeded random pairs through both identities, with
/// `λ = λ₀ + i` for the conjugation identity and orders `1..=max_order` at
/// `λ = -2 + i/2` for the telescoping sum.
pub fn algebra_trials(seed: u64, trials: usize, dim: usize, max_order: usize) -> Result<AlgebraReport> {
    let res: Vec<(f64, f64)> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let pair = random_pair(seed.wrapping_add(t), dim)?;
            let c = conjugation_identity_residual(&pair, pair.lambda0 + C64::new(0.0, 1.0))?;
            let mut tel: f64 = 0.0;
            for m in 1..=max_order {
                tel = tel.max(telescoping_residual(&pair, C64::new(-2.0, 0.5), m)?);
            }
            Ok((c, tel))
        })
        .collect::<Result<_>>()?;
    Ok(AlgebraReport {
        seed,
        trials,
        dim,
        conjugation_max: res.iter().map(|r| r.0).fold(0.0, f64::max),
        telescoping_max: res.iter().map(|r| r.1).fold(0.0, f64::max),
        max_order,
    })
}

/// Synthetic instance with prescribed singular values:
/// `(K - λ₀)^{-1} = Q diag(j^{-a}) Q*`, `B = Q diag(j^{-b₁}) P*`,
/// `C = P diag(j^{-b₂}) Q*`, so `(K - λ₀)^{-k}B` and `C(K - λ₀)^{-k}` decay
/// like `j^{-(ak + b₁)}` and `j^{-(ak + b₂)}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawInstance {
    pub dim: usize,
    pub a: f64,
    pub b1: f64,
    pub b2: f64,
    pub seed: u64,
}

impl PowerLawInstance {
    /// `b = b₁ + b₂ - a`; the hypotheses need `a ≤ b₁ + b₂`.
    pub fn b(&self) -> f64 {
        self.b1 + self.b2 - self.a
    }

    pub fn expected_slope(&self, l: u32) -> f64 {
        -(self.a * l as f64 + self.b())
    }

    /// Returns `(K, B, C)` with `λ₀ = -1`.
    pub fn build(&self) -> Result<(CMatrix, CMatrix, CMatrix)> {
        if !(self.a > 0.0) || self.b1 < 0.0 || self.b2 < 0.0 || self.a > self.b1 + self.b2 {
            return Err(Error::Config(format!("power-law instance needs a > 0, b₁, b₂ ≥ 0, a ≤ b₁ + b₂: {self:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let q = random_unitary(&mut rng, self.dim);
        let p = random_unitary(&mut rng, self.dim);
        let diag = |e: f64| {
            CMatrix::from_diagonal(&DVector::from_fn(self.dim, |j, _| C64::new(((j + 1) as f64).powf(e), 0.0)))
        };
        let k = &q * diag(self.a) * q.adjoint() - identity(self.dim);
        let b = &q * diag(-self.b1) * p.adjoint();
        let c = &p * diag(-self.b2) * q.adjoint();
        Ok((k, b, c))
    }
}

/// `H` with `(H - λ₀)^{-1} = (K - λ₀)^{-1} + BC`. If that sum is singular the
/// perturbation is halved until it is not.
pub fn synthesize_pair(k: &CMatrix, b: &CMatrix, c: &CMatrix, lambda0: C64) -> Result<MatrixPair> {
    let rk = resolvent(k, lambda0)?;
    let bc = b * c;
    if bc.iter().all(|z| *z == C64::new(0.0, 0.0)) {
        return MatrixPair::new(k.clone(), k.clone(), lambda0);
    }
    let mut scale = 1.0;
    for _ in 0..8 {
        let rh = &rk + &bc * C64::new(scale, 0.0);
        if condition(&rh) < MAX_CONDITION {
            let h = rh.try_inverse().ok_or(Error::Singular)? + identity(k.nrows()) * lambda0;
            return MatrixPair::new(h, k.clone(), lambda0);
        }
        log::warn!("(K - λ₀)^(-1) + BC is singular; rescaling BC by {}", scale * 0.5);
        scale *= 0.5;
    }
    Err(Error::Resolvent("(K - λ₀)^(-1) + BC stays singular under rescaling".into()))
}

pub fn singular_values_desc(m: &CMatrix) -> Vec<f64> {
    let mut s: Vec<f64> = m.clone().singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Number of singular values above `rel_tol·s₁`.
pub fn numerical_rank(m: &CMatrix, rel_tol: f64) -> usize {
    let s = singular_values_desc(m);
    let top = s.first().copied().unwrap_or(0.0);
    s.iter().filter(|v| **v > rel_tol * top && **v > 0.0).count()
}

/// Profiles of `(H - λ)^{-l} - (K - λ)^{-l}`, `l ∈ powers`, for the pair
/// synthesized from `K`, `B`, `C` at `λ₀`.
pub fn factorized_decay_demo(
    k: &CMatrix,
    b: &CMatrix,
    c: &CMatrix,
    lambda0: C64,
    lambda: C64,
    powers: &[u32],
    fit: FitRange,
    expected: impl Fn(u32) -> Option<f64>,
) -> Result<Vec<SingularValueProfile>> {
    let pair = synthesize_pair(k, b, c, lambda0)?;
    powers
        .iter()
        .map(|&l| {
            let d = pair.power_difference(lambda, l as usize)?;
            Ok(SingularValueProfile::from_values(format!("algebra_l{l}"), singular_values_desc(&d), fit, expected(l)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn conjugation_trivial_cases() {
        let pair = random_pair(1, 12).unwrap();
        assert_eq!(conjugation_identity_residual(&pair, pair.lambda0).unwrap(), 0.0);
        let same = MatrixPair::new(pair.h.clone(), pair.h.clone(), pair.lambda0).unwrap();
        assert_eq!(conjugation_identity_residual(&same, c(-1.0, 1.0)).unwrap(), 0.0);
    }

    #[test]
    fn conjugation_random_hermitian() {
        let pair = random_pair(7, 20).unwrap();
        let r = conjugation_identity_residual(&pair, pair.lambda0 + c(0.0, 1.0)).unwrap();
        assert!(r < 1e-11, "{r:e}");
    }

    #[test]
    fn telescoping_cases() {
        let pair = random_pair(3, 20).unwrap();
        assert_eq!(telescoping_residual(&pair, c(-2.0, 0.5), 1).unwrap(), 0.0);
        assert!(telescoping_residual(&pair, c(-2.0, 0.5), 3).unwrap() < 1e-10);
        let same = MatrixPair::new(pair.k.clone(), pair.k.clone(), pair.lambda0).unwrap();
        for m in 1..=6 {
            assert_eq!(telescoping_residual(&same, c(-2.0, 0.5), m).unwrap(), 0.0);
        }
        assert!(telescoping_residual(&pair, c(-2.0, 0.5), 7).is_err());
    }

    #[test]
    fn spectrum_is_rejected() {
        let h = CMatrix::from_diagonal(&DVector::from_vec(vec![c(1.0, 0.0), c(2.0, 0.0)]));
        let pair = MatrixPair::new(h.clone(), h.clone(), c(-1.0, 0.0)).unwrap();
        assert!(matches!(conjugation_identity_residual(&pair, c(2.0, 0.0)), Err(Error::Resolvent(_))));
        assert!(MatrixPair::new(h.clone(), h, c(1.0, 0.0)).is_err());
    }

    #[test]
    fn trials_are_deterministic_and_small() {
        let a = algebra_trials(DEFAULT_SEED, 10, 20, 6).unwrap();
        let b = algebra_trials(DEFAULT_SEED, 10, 20, 6).unwrap();
        assert_eq!(a, b);
        assert!(a.conjugation_max < 1e-10 && a.telescoping_max < 1e-10, "{a:?}");
    }

    #[test]
    fn t_terms_transport_from_lambda0() {
        // T_{m,k}(λ) = E^{m-k} T_{m,k}(λ₀) F^{k+1}
        let pair = random_pair(11, 16).unwrap();
        let lambda = c(-2.5, 0.7);
        let shift = lambda - pair.lambda0;
        let e = identity(16) + resolvent(&pair.h, lambda).unwrap() * shift;
        let f = identity(16) + resolvent(&pair.k, lambda).unwrap() * shift;
        for m in 1..=4 {
            for k in 0..m {
                let lhs = pair.t_term(lambda, m, k).unwrap();
                let rhs = power(&e, m - k) * pair.t_term(pair.lambda0, m, k).unwrap() * power(&f, k + 1);
                assert!((lhs - rhs).norm() < 1e-11);
            }
        }
    }

    #[test]
    fn power_law_factors_have_prescribed_decay() {
        let inst = PowerLawInstance { dim: 40, a: 2.0, b1: 1.0, b2: 1.0, seed: 5 };
        let (k, b, cm) = inst.build().unwrap();
        let rk = resolvent(&k, c(-1.0, 0.0)).unwrap();
        for kk in 0..3 {
            let s = singular_values_desc(&(power(&rk, kk) * &b));
            for (j, v) in s.iter().enumerate() {
                let want = ((j + 1) as f64).powf(-(inst.a * kk as f64 + inst.b1));
                assert!((v - want).abs() < 1e-10 * want.max(1e-6), "k={kk} j={j}");
            }
        }
        let s = singular_values_desc(&(&cm * &rk));
        assert!((s[9] - 10f64.powf(-3.0)).abs() < 1e-12);
    }

    #[test]
    fn decay_demo_matches_exponent_sum() {
        let inst = PowerLawInstance { dim: 120, a: 2.0, b1: 1.0, b2: 1.0, seed: 9 };
        let (k, b, cm) = inst.build().unwrap();
        let prof = factorized_decay_demo(&k, &b, &cm, c(-1.0, 0.0), c(-2.0, 0.0), &[1, 2], FitRange::new(10, 100), |l| {
            Some(inst.expected_slope(l))
        })
        .unwrap();
        for p in &prof {
            let (s, e) = (p.slope.unwrap(), p.expected_slope.unwrap());
            assert!((s - e).abs() < 0.3, "{}: {s} vs {e}", p.tag);
        }
    }

    #[test]
    fn zero_perturbation_gives_zero_difference() {
        let inst = PowerLawInstance { dim: 10, a: 1.0, b1: 0.5, b2: 0.5, seed: 1 };
        let (k, b, _) = inst.build().unwrap();
        let zero = CMatrix::zeros(10, 10);
        let pair = synthesize_pair(&k, &b, &zero, c(-1.0, 0.0)).unwrap();
        for l in 1..=3 {
            assert_eq!(numerical_rank(&pair.power_difference(c(-2.0, 0.0), l).unwrap(), 1e-12), 0);
        }
    }

    #[test]
    fn rank_one_growth() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 24;
        let k = random_hermitian(&mut rng, n, 0.5, 3.0);
        let u = CMatrix::from_fn(n, 1, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))) * c(0.2, 0.0);
        let pair = synthesize_pair(&k, &u, &u.adjoint(), c(-1.0, 0.0)).unwrap();
        for l in 1..=3 {
            let r = numerical_rank(&pair.power_difference(c(-2.0, 0.0), l).unwrap(), 1e-10);
            assert!(r <= 2 * l - 1, "l={l}: rank {r}");
        }
        assert_eq!(numerical_rank(&pair.difference(c(-2.0, 0.0)).unwrap(), 1e-10), 1);
    }
}
