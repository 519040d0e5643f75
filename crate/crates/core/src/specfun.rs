//! Modified Bessel functions of integer order and modified spherical Bessel
//! functions for real positive arguments.
//!
//! `K_0` and `K_1` come from Temme's series for `x <= 2` and Steed's
//! continued fraction (CF2) above that. Higher orders of `K` use the upward
//! recurrence, which is stable. `I_l` is never recurred: the ratio
//! `I_{l+1}/I_l` comes from a continued fraction (CF1, modified Lentz) and
//! the value is then fixed by the Wronskian `I_l K_{l+1} + I_{l+1} K_l = 1/x`.
//!
//! Ratio-only entry points ([`bessel_ik_ratios`], [`sph_bessel_ik_ratios`])
//! never form `I` or `K` themselves and stay finite where the values would
//! overflow (large order, small argument). The mode backends use those.

use crate::error::{Error, Result};

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Arguments at or beyond this value are rejected: `I_l(x)` overflows near
/// `x = 709`.
pub const MAX_ARGUMENT: f64 = 700.0;
pub const MAX_ORDER: u32 = 200;

/// Below this, `K_0`/`K_1` use the series; above, Steed's CF2.
const SERIES_SWITCH: f64 = 2.0;
const EPS: f64 = 1e-16;
const TINY: f64 = 1e-300;
const MAX_ITER: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BesselPair {
    pub order: u32,
    pub x: f64,
    pub i: f64,
    pub k: f64,
    pub di: f64,
    pub dk: f64,
}

impl BesselPair {
    /// `x (I' K - I K') - 1`, zero in exact arithmetic.
    pub fn wronskian_residual(&self) -> f64 {
        self.x * (self.di * self.k - self.i * self.dk) - 1.0
    }
}

/// Logarithmic derivatives `I_l'/I_l` and `K_l'/K_l` at `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BesselRatios {
    pub order: u32,
    pub x: f64,
    pub di_over_i: f64,
    pub dk_over_k: f64,
}

impl BesselRatios {
    /// `I_l(x) K_l(x)` via the Wronskian; finite for every order.
    pub fn product_ik(&self) -> f64 {
        1.0 / (self.x * (self.di_over_i - self.dk_over_k))
    }
}

/// Modified spherical Bessel values, normalized so that
/// `i_0(x) = sinh(x)/x` and `k_0(x) = exp(-x)/x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphBesselValues {
    pub order: u32,
    pub x: f64,
    pub i: f64,
    pub k: f64,
    pub di: f64,
    pub dk: f64,
}

impl SphBesselValues {
    /// `x^2 (i' k - i k') - 1`.
    pub fn wronskian_residual(&self) -> f64 {
        self.x * self.x * (self.di * self.k - self.i * self.dk) - 1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphBesselRatios {
    pub order: u32,
    pub x: f64,
    pub di_over_i: f64,
    pub dk_over_k: f64,
}

impl SphBesselRatios {
    /// `i_l(x) k_l(x)` via the Wronskian `i' k - i k' = 1/x^2`.
    pub fn product_ik(&self) -> f64 {
        1.0 / (self.x * self.x * (self.di_over_i - self.dk_over_k))
    }
}

fn check_args(l: u32, x: f64) -> Result<()> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("Bessel argument must be positive and finite, got {x}")));
    }
    if x >= MAX_ARGUMENT {
        return Err(Error::Overflow(format!(
            "Bessel argument {x} >= {MAX_ARGUMENT}; use the ratio functions or rescale by exp(-x)"
        )));
    }
    if l > MAX_ORDER {
        return Err(Error::Domain(format!("Bessel order {l} exceeds {MAX_ORDER}")));
    }
    Ok(())
}

/// Returns `(K_0(x), K_1(x)/K_0(x))`.
///
/// The ratio is returned instead of `K_1` so that callers working with
/// logarithmic derivatives never touch `exp(-x)`.
fn k0_and_ratio(x: f64) -> (f64, f64) {
    if x <= SERIES_SWITCH {
        // Temme's series specialised to order zero: gamma_1 = -gamma_E, gamma_2 = 1.
        let half = 0.5 * x;
        let quarter_sq = half * half;
        let mut ff = -EULER_GAMMA - half.ln();
        let mut p = 0.5;
        let mut q = 0.5;
        let mut c = 1.0;
        let mut sum = ff;
        let mut sum1 = p;
        for i in 1..MAX_ITER {
            let fi = i as f64;
            ff = (fi * ff + p + q) / (fi * fi);
            c *= quarter_sq / fi;
            p /= fi;
            q /= fi;
            let del = c * ff;
            sum += del;
            sum1 += c * (p - fi * ff);
            if del.abs() < sum.abs() * EPS {
                break;
            }
        }
        let k1 = sum1 * 2.0 / x;
        (sum, k1 / sum)
    } else {
        // Steed's CF2 with mu = 0.
        let a1 = 0.25;
        let mut b = 2.0 * (1.0 + x);
        let mut d = 1.0 / b;
        let mut h = d;
        let mut delh = d;
        let mut q1 = 0.0;
        let mut q2 = 1.0;
        let mut q = a1;
        let mut c = a1;
        let mut a = -a1;
        let mut s = 1.0 + q * delh;
        for i in 1..MAX_ITER {
            let fi = i as f64;
            a -= 2.0 * fi;
            c = -a * c / (fi + 1.0);
            let qnew = (q1 - b * q2) / a;
            q1 = q2;
            q2 = qnew;
            q += c * qnew;
            b += 2.0;
            d = 1.0 / (b + a * d);
            delh = (b * d - 1.0) * delh;
            h += delh;
            let dels = q * delh;
            s += dels;
            if (dels / s).abs() < EPS {
                break;
            }
        }
        h *= a1;
        let k0 = (std::f64::consts::PI / (2.0 * x)).sqrt() * (-x).exp() / s;
        (k0, (x + 0.5 - h) / x)
    }
}

/// `K_0(x)` and `K_1(x)`; the hot path for kernel assembly.
pub fn bessel_k01(x: f64) -> (f64, f64) {
    let (k0, ratio) = k0_and_ratio(x);
    (k0, k0 * ratio)
}

pub fn bessel_k0(x: f64) -> f64 {
    k0_and_ratio(x).0
}

/// `I_0(x)` by its power series (positive terms, no cancellation) for
/// moderate `x`; larger arguments go through [`bessel_ik`].
pub fn bessel_i0(x: f64) -> f64 {
    if x.abs() <= 25.0 {
        let q = 0.25 * x * x;
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..200 {
            let fk = k as f64;
            term *= q / (fk * fk);
            sum += term;
            if term < EPS * sum {
                break;
            }
        }
        sum
    } else {
        bessel_ik(0, x.abs()).map(|p| p.i).unwrap_or(f64::INFINITY)
    }
}

/// Regular part of `K_0`: `K_0(x) + ln(x/2) I_0(x)`.
///
/// Needed by the logarithmic kernel split; computed from its own series for
/// small `x` where the two terms nearly cancel.
pub fn k0_regular_part(x: f64) -> f64 {
    if x <= 2.0 {
        let q = 0.25 * x * x;
        let mut term = 1.0;
        let mut harmonic = 0.0;
        let mut sum = -EULER_GAMMA;
        for k in 1..200 {
            let fk = k as f64;
            term *= q / (fk * fk);
            harmonic += 1.0 / fk;
            let add = term * (harmonic - EULER_GAMMA);
            sum += add;
            if add.abs() < EPS * sum.abs() {
                break;
            }
        }
        sum
    } else {
        bessel_k0(x) + (0.5 * x).ln() * bessel_i0(x)
    }
}

/// `I_{l+1}(x) / I_l(x)` for real order `nu`, by the continued fraction
/// `1/(b_1 + 1/(b_2 + ...))` with `b_k = 2(nu + k)/x`.
fn ratio_i_next(nu: f64, x: f64, step: f64) -> Result<f64> {
    let mut f = TINY;
    let mut c = f;
    let mut d = 0.0;
    for k in 1..MAX_ITER {
        let b = step * (nu + k as f64) / x;
        d = b + d;
        if d == 0.0 {
            d = TINY;
        }
        c = b + 1.0 / c;
        if c == 0.0 {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < EPS {
            return Ok(f);
        }
    }
    Err(Error::NoConvergence(format!("CF1 ratio at order {nu}, x = {x}")))
}

/// `I_l, K_l` and their derivatives.
pub fn bessel_ik(l: u32, x: f64) -> Result<BesselPair> {
    check_args(l, x)?;
    let (k0, ratio) = k0_and_ratio(x);
    let mut k_prev = k0;
    let mut k_cur = k0 * ratio;
    for n in 1..=l {
        let next = k_prev + (2.0 * n as f64 / x) * k_cur;
        k_prev = k_cur;
        k_cur = next;
    }
    // k_prev = K_l, k_cur = K_{l+1}
    let (k_l, k_next) = (k_prev, k_cur);
    if !k_next.is_finite() {
        return Err(Error::Overflow(format!(
            "K_{l}({x}) overflows; use bessel_ik_ratios for order/argument pairs this extreme"
        )));
    }
    let r = ratio_i_next(l as f64, x, 2.0)?;
    let i_l = 1.0 / (x * (r * k_l + k_next));
    if i_l == 0.0 || !i_l.is_finite() {
        return Err(Error::Overflow(format!(
            "I_{l}({x}) is not representable; use bessel_ik_ratios"
        )));
    }
    let lx = l as f64 / x;
    Ok(BesselPair {
        order: l,
        x,
        i: i_l,
        k: k_l,
        di: i_l * (lx + r),
        dk: lx * k_l - k_next,
    })
}

/// Logarithmic derivatives of `I_l` and `K_l` without forming either.
pub fn bessel_ik_ratios(l: u32, x: f64) -> Result<BesselRatios> {
    check_args(l, x)?;
    let (_, mut rho) = k0_and_ratio(x);
    // rho_n = K_{n+1}/K_n
    for n in 1..=l {
        rho = 1.0 / rho + 2.0 * n as f64 / x;
    }
    let r = ratio_i_next(l as f64, x, 2.0)?;
    let lx = l as f64 / x;
    Ok(BesselRatios { order: l, x, di_over_i: lx + r, dk_over_k: lx - rho })
}

/// `(ln I_l(x), ln K_l(x))`, finite wherever the ratios are, including
/// order/argument pairs where the values themselves over- or underflow.
pub fn ln_bessel_ik(l: u32, x: f64) -> Result<(f64, f64)> {
    check_args(l, x)?;
    let (k0, mut rho) = k0_and_ratio(x);
    let mut ln_k = k0.ln();
    for n in 1..=l {
        ln_k += rho.ln();
        rho = 1.0 / rho + 2.0 * n as f64 / x;
    }
    // rho = K_{l+1}/K_l; Wronskian: I_l = 1/(x (r K_l + K_{l+1}))
    let r = ratio_i_next(l as f64, x, 2.0)?;
    let ln_i = -x.ln() - ln_k - (r + rho).ln();
    Ok((ln_i, ln_k))
}

/// `i_{l+1}/i_l` from the continued fraction with `b_k = (2(l+k)+1)/x`.
fn ratio_sph_i_next(l: u32, x: f64) -> Result<f64> {
    // b_k = 2(l + k + 1/2)/x
    ratio_i_next(l as f64 + 0.5, x, 2.0)
}

pub fn sph_bessel_ik(l: u32, x: f64) -> Result<SphBesselValues> {
    check_args(l, x)?;
    let e = (-x).exp();
    let mut k_prev = e / x;
    let mut k_cur = e * (x + 1.0) / (x * x);
    for n in 1..=l {
        let next = k_prev + ((2 * n + 1) as f64 / x) * k_cur;
        k_prev = k_cur;
        k_cur = next;
    }
    let (k_l, k_next) = (k_prev, k_cur);
    if !k_next.is_finite() {
        return Err(Error::Overflow(format!(
            "k_{l}({x}) overflows; use sph_bessel_ik_ratios"
        )));
    }
    let lx = l as f64 / x;
    let dk = lx * k_l - k_next;
    let i_l = if l == 0 {
        // closed form keeps i_0 exact to rounding
        if x < 1e-4 {
            1.0 + x * x / 6.0
        } else {
            x.sinh() / x
        }
    } else {
        let s = ratio_sph_i_next(l, x)?;
        1.0 / (x * x * ((lx + s) * k_l - dk))
    };
    let di = if l == 0 {
        // i_0' = i_1 = (x cosh x - sinh x)/x^2
        if x < 1e-3 {
            x / 3.0 * (1.0 + x * x / 10.0)
        } else {
            (x * x.cosh() - x.sinh()) / (x * x)
        }
    } else {
        let s = ratio_sph_i_next(l, x)?;
        i_l * (lx + s)
    };
    if i_l == 0.0 || !i_l.is_finite() {
        return Err(Error::Overflow(format!("i_{l}({x}) is not representable")));
    }
    Ok(SphBesselValues { order: l, x, i: i_l, k: k_l, di, dk })
}

pub fn sph_bessel_ik_ratios(l: u32, x: f64) -> Result<SphBesselRatios> {
    check_args(l, x)?;
    // sigma_n = k_{n+1}/k_n, sigma_0 = 1 + 1/x
    let mut sigma = 1.0 + 1.0 / x;
    for n in 1..=l {
        sigma = 1.0 / sigma + (2 * n + 1) as f64 / x;
    }
    let s = ratio_sph_i_next(l, x)?;
    let lx = l as f64 / x;
    Ok(SphBesselRatios { order: l, x, di_over_i: lx + s, dk_over_k: lx - sigma })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn i0_small_argument_limit() {
        let p = bessel_ik(0, 1e-8).unwrap();
        assert!((p.i - 1.0).abs() < 1e-15);
    }

    #[test]
    fn wronskian_holds() {
        for l in [0, 1, 2, 5, 10, 30] {
            for x in [0.5, 1.0, 5.0] {
                let p = bessel_ik(l, x).unwrap();
                assert!(p.wronskian_residual().abs() < 1e-12, "l={l} x={x}");
            }
        }
    }

    #[test]
    fn known_values() {
        // Abramowitz & Stegun table 9.8
        let p = bessel_ik(0, 1.0).unwrap();
        assert!(rel(p.i, 1.266_065_877_752_008_4) < 1e-14);
        assert!(rel(p.k, 0.421_024_438_240_708_3) < 1e-14);
        let p = bessel_ik(1, 1.0).unwrap();
        assert!(rel(p.i, 0.565_159_103_992_485_0) < 1e-14);
        assert!(rel(p.k, 0.601_907_230_197_234_6) < 1e-14);
        let p = bessel_ik(0, 5.0).unwrap();
        assert!(rel(p.k, 3.691_098_334_042_594e-3) < 1e-13);
        assert!(rel(p.i, 27.239_871_823_604_44) < 1e-13);
    }

    #[test]
    fn continuity_across_series_switch() {
        let below = bessel_k01(SERIES_SWITCH * (1.0 - 1e-15));
        let above = bessel_k01(SERIES_SWITCH * (1.0 + 1e-15));
        assert!(rel(below.0, above.0) < 1e-12);
        assert!(rel(below.1, above.1) < 1e-12);
    }

    #[test]
    fn logarithms_match_values() {
        for l in [0u32, 1, 7, 30] {
            for &x in &[0.2, 1.0, 6.0, 40.0] {
                let p = bessel_ik(l, x).unwrap();
                let (li, lk) = ln_bessel_ik(l, x).unwrap();
                assert!((li - p.i.ln()).abs() < 1e-12 * p.i.ln().abs().max(1.0));
                assert!((lk - p.k.ln()).abs() < 1e-12 * p.k.ln().abs().max(1.0));
            }
        }
        let (li, lk) = ln_bessel_ik(200, 0.05).unwrap();
        assert!(li.is_finite() && lk.is_finite() && li < -700.0 && lk > 700.0);
    }

    #[test]
    fn recurrences_hold() {
        for l in 1..50u32 {
            for &x in &[0.1, 0.7, 2.0, 3.3, 10.0, 50.0] {
                let (Ok(a), Ok(b), Ok(c)) = (bessel_ik(l - 1, x), bessel_ik(l, x), bessel_ik(l + 1, x))
                else {
                    continue;
                };
                let lhs = a.i - c.i;
                let rhs = 2.0 * l as f64 / x * b.i;
                assert!((lhs - rhs).abs() <= 1e-11 * rhs.abs().max(a.i.abs()), "I l={l} x={x}");
                let lhs = c.k - a.k;
                let rhs = 2.0 * l as f64 / x * b.k;
                assert!((lhs - rhs).abs() <= 1e-11 * rhs.abs(), "K l={l} x={x}");
            }
        }
    }

    #[test]
    fn monotone_in_argument() {
        for l in [0, 1, 4, 12] {
            let mut last: Option<BesselPair> = None;
            for j in 1..200 {
                let x = 0.05 * j as f64;
                let p = bessel_ik(l, x).unwrap();
                assert!(p.i > 0.0 && p.k > 0.0 && p.dk < 0.0);
                if let Some(q) = last {
                    assert!(p.i > q.i);
                    assert!(p.k < q.k);
                }
                last = Some(p);
            }
        }
    }

    #[test]
    fn ratios_agree_with_values() {
        for l in [0, 3, 17] {
            for x in [0.3, 2.5, 40.0] {
                let p = bessel_ik(l, x).unwrap();
                let r = bessel_ik_ratios(l, x).unwrap();
                assert!(rel(r.di_over_i, p.di / p.i) < 1e-13);
                assert!(rel(r.dk_over_k, p.dk / p.k) < 1e-13);
                assert!(rel(r.product_ik(), p.i * p.k) < 1e-13);
            }
        }
    }

    #[test]
    fn ratios_survive_where_values_overflow() {
        assert!(matches!(bessel_ik(200, 0.05), Err(Error::Overflow(_))));
        let r = bessel_ik_ratios(200, 0.05).unwrap();
        // I_l K_l -> 1/(2l) for x << l
        assert!(rel(r.product_ik(), 1.0 / 400.0) < 1e-4);
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(bessel_ik(0, 0.0), Err(Error::Domain(_))));
        assert!(matches!(bessel_ik(0, -1.0), Err(Error::Domain(_))));
        assert!(matches!(bessel_ik(0, 800.0), Err(Error::Overflow(_))));
        assert!(matches!(sph_bessel_ik(2, f64::NAN), Err(Error::Domain(_))));
    }

    #[test]
    fn spherical_closed_forms() {
        for x in [0.1, 1.0, 3.0] {
            let v = sph_bessel_ik(0, x).unwrap();
            assert!(rel(v.i, x.sinh() / x) < 1e-13);
            assert!(rel(v.k, (-x).exp() / x) < 1e-13);
        }
    }

    #[test]
    fn spherical_wronskian_and_ratios() {
        for l in [0, 1, 2, 7, 40] {
            for x in [0.3, 1.0, 3.0, 20.0] {
                let v = sph_bessel_ik(l, x).unwrap();
                assert!(v.wronskian_residual().abs() < 1e-12, "l={l} x={x}");
                let r = sph_bessel_ik_ratios(l, x).unwrap();
                assert!(rel(r.di_over_i, v.di / v.i) < 1e-12);
                assert!(rel(r.dk_over_k, v.dk / v.k) < 1e-12);
                assert!(rel(r.product_ik(), v.i * v.k) < 1e-12);
            }
        }
    }

    #[test]
    fn regular_part_matches_definition() {
        for x in [0.01, 0.5, 1.9, 2.1, 6.0] {
            let direct = bessel_k0(x) + (0.5 * x).ln() * bessel_i0(x);
            assert!((k0_regular_part(x) - direct).abs() < 1e-13 * (1.0 + direct.abs()));
        }
        assert!((k0_regular_part(1e-12) + EULER_GAMMA).abs() < 1e-15);
    }
}
