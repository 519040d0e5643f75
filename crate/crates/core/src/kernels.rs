//! Free-space Green kernels of `-Δ - λ` for real `λ < 0`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::specfun::bessel_k01;

/// A spectral parameter `λ < 0` together with its decay rate `κ = √(-λ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralPoint {
    lambda: f64,
    kappa: f64,
}

impl SpectralPoint {
    pub fn from_lambda(lambda: f64) -> Result<Self> {
        if !(lambda < 0.0) || !lambda.is_finite() {
            return Err(Error::Domain(format!("spectral parameter must be negative, got {lambda}")));
        }
        Ok(Self { lambda, kappa: (-lambda).sqrt() })
    }

    pub fn from_kappa(kappa: f64) -> Result<Self> {
        if !(kappa > 0.0) || !kappa.is_finite() {
            return Err(Error::Domain(format!("decay rate must be positive, got {kappa}")));
        }
        Ok(Self { lambda: -kappa * kappa, kappa })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }
}

fn dist2(x: [f64; 2], y: [f64; 2]) -> f64 {
    (x[0] - y[0]).hypot(x[1] - y[1])
}

/// `G(x, y) = K_0(κ|x - y|) / 2π`.
pub fn green_2d(x: [f64; 2], y: [f64; 2], kappa: f64) -> Result<f64> {
    let r = dist2(x, y);
    if r == 0.0 {
        return Err(Error::Singular);
    }
    Ok(green_2d_radial(r, kappa))
}

/// Radial profile of [`green_2d`]; `r > 0` is the caller's responsibility.
#[inline]
pub fn green_2d_radial(r: f64, kappa: f64) -> f64 {
    bessel_k01(kappa * r).0 / (2.0 * PI)
}

/// Yukawa kernel `exp(-κ|x - y|) / (4π|x - y|)`.
pub fn green_3d(x: [f64; 3], y: [f64; 3], kappa: f64) -> Result<f64> {
    let r = ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2) + (x[2] - y[2]).powi(2)).sqrt();
    if r == 0.0 {
        return Err(Error::Singular);
    }
    Ok((-kappa * r).exp() / (4.0 * PI * r))
}

/// Gradient of [`green_2d`] with respect to `y`.
pub fn green_2d_grad_y(x: [f64; 2], y: [f64; 2], kappa: f64) -> Result<[f64; 2]> {
    let r = dist2(x, y);
    if r == 0.0 {
        return Err(Error::Singular);
    }
    // d/dr K_0(κr) = -κ K_1(κr); the radial direction seen from x is (y - x)/r
    let (_, k1) = bessel_k01(kappa * r);
    let g = -kappa * k1 / (2.0 * PI * r);
    Ok([g * (y[0] - x[0]), g * (y[1] - x[1])])
}

/// `∂_{ν(y)} G(x, y)`, the double-layer kernel.
pub fn green_2d_normal_derivative(x: [f64; 2], y: [f64; 2], normal_y: [f64; 2], kappa: f64) -> Result<f64> {
    let g = green_2d_grad_y(x, y, kappa)?;
    Ok(g[0] * normal_y[0] + g[1] * normal_y[1])
}
