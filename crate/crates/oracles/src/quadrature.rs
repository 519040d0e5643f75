use std::f64::consts::PI;

use crate::bessel::bessel_k_scaled;
use crate::{OracleError, Result};

/// `∫_0^π f` by the tanh-sinh rule with `order + 1` nodes on `|t| ≤ 3.2`;
/// exact up to round-off for integrands with endpoint logarithms.
pub fn tanh_sinh_0_pi(f: impl Fn(f64) -> f64, order: usize) -> f64 {
    let t_max = 3.2;
    let h = 2.0 * t_max / order as f64;
    let mut sum = 0.0;
    for j in 0..=order {
        let t = -t_max + j as f64 * h;
        let q = (-PI * t.sinh()).exp();
        let theta = PI / (1.0 + q);
        let w = PI * q * PI * t.cosh() / ((1.0 + q) * (1.0 + q));
        let end = if j == 0 || j == order { 0.5 } else { 1.0 };
        sum += end * w * f(theta);
    }
    sum * h
}

/// Eigenvalue of mode `l` of the circle single layer, as the Fourier
/// coefficient `∫_0^{2π} (R/2π) K_0(2κR sin(θ/2)) cos(lθ) dθ`.
pub fn mode_fourier_single_layer(l: u32, kappa: f64, radius: f64, order: usize) -> Result<f64> {
    if order < 512 {
        return Err(OracleError::InvalidInput(format!("quadrature order must be ≥ 512, got {order}")));
    }
    if !(kappa > 0.0 && radius > 0.0) {
        return Err(OracleError::InvalidInput(format!("need κ, R > 0, got κ = {kappa}, R = {radius}")));
    }
    let f = |theta: f64| {
        let z = 2.0 * kappa * radius * (0.5 * theta).sin();
        bessel_k_scaled(0, z) * (-z).exp() * (l as f64 * theta).cos()
    };
    Ok(2.0 * radius / (2.0 * PI) * tanh_sinh_0_pi(f, order))
}

const GL7_X: [f64; 7] = [
    -0.949_107_912_342_758_5,
    -0.741_531_185_599_394_4,
    -0.405_845_151_377_397_2,
    0.0,
    0.405_845_151_377_397_2,
    0.741_531_185_599_394_4,
    0.949_107_912_342_758_5,
];
const GL7_W: [f64; 7] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
    0.381_830_050_505_118_9,
    0.279_705_391_489_276_7,
    0.129_484_966_168_869_7,
];

fn gauss7(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let (c, r) = (0.5 * (a + b), 0.5 * (b - a));
    GL7_X.iter().zip(GL7_W).map(|(x, w)| w * f(c + r * x)).sum::<f64>() * r
}

fn adapt(f: &impl Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (l, r) = (gauss7(f, a, m), gauss7(f, m, b));
    let err = (l + r - whole).abs();
    if depth == 0 || err <= tol || err <= 1e-13 * (l + r).abs() {
        l + r
    } else {
        adapt(f, a, m, l, 0.5 * tol, depth - 1) + adapt(f, m, b, r, 0.5 * tol, depth - 1)
    }
}

/// Adaptive 7-point Gauss–Legendre quadrature to absolute tolerance `tol`.
pub fn adaptive_gauss(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let whole = gauss7(&f, a, b);
    adapt(&f, a, b, whole, tol, 24)
}

/// Perimeter of the ellipse with semi-axes `a`, `b`.
pub fn ellipse_perimeter(a: f64, b: f64) -> f64 {
    4.0 * adaptive_gauss(|t| (a * a * t.sin().powi(2) + b * b * t.cos().powi(2)).sqrt(), 0.0, 0.5 * PI, 1e-15)
}
