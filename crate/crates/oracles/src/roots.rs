use serde::{Deserialize, Serialize};

use crate::{OracleError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RootReport {
    Root { x: f64 },
    NoRoot { f_lo: f64, f_hi: f64 },
}

impl RootReport {
    pub fn root(&self) -> Option<f64> {
        match self {
            RootReport::Root { x } => Some(*x),
            RootReport::NoRoot { .. } => None,
        }
    }
}

/// Plain bisection of `f` on `[lo, hi]` down to `1e-12` relative width.
pub fn bessel_root_bisect(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> Result<RootReport> {
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(OracleError::DegenerateBracket { lo, hi });
    }
    let (mut a, mut b) = (lo, hi);
    let (mut fa, fb) = (f(a), f(b));
    if fa == 0.0 {
        return Ok(RootReport::Root { x: a });
    }
    if fb == 0.0 {
        return Ok(RootReport::Root { x: b });
    }
    if fa.signum() == fb.signum() || fa.is_nan() || fb.is_nan() {
        return Ok(RootReport::NoRoot { f_lo: fa, f_hi: fb });
    }
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b || b - a <= 1e-12 * a.abs().max(b.abs()) {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(RootReport::Root { x: mid });
        }
        if fm.signum() == fa.signum() {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
    }
    Ok(RootReport::Root { x: 0.5 * (a + b) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_sqrt_two() {
        let r = bessel_root_bisect(|x| x * x - 2.0, 0.0, 2.0).unwrap().root().unwrap();
        assert!((r - 2f64.sqrt()).abs() < 2e-12);
    }

    #[test]
    fn reports_missing_root() {
        assert!(matches!(bessel_root_bisect(|x| x * x + 1.0, -1.0, 1.0).unwrap(), RootReport::NoRoot { .. }));
    }

    #[test]
    fn degenerate_bracket_is_an_error() {
        assert_eq!(
            bessel_root_bisect(|x| x, 1.0, 1.0).unwrap_err(),
            OracleError::DegenerateBracket { lo: 1.0, hi: 1.0 }
        );
    }
}
