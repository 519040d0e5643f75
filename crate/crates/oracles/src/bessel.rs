//! Modified Bessel functions from their power series, integral
//! representations and finite sums. Slow but transparent.

use std::f64::consts::PI;

fn ln_factorial(n: u32) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// `e^{-z} I_l(z)` from the all-positive power series, for `0 ≤ z ≤ 200`.
pub fn bessel_i_scaled(l: u32, z: f64) -> f64 {
    if z == 0.0 {
        return if l == 0 { 1.0 } else { 0.0 };
    }
    let q = 0.25 * z * z;
    let mut term = (l as f64 * (0.5 * z).ln() - ln_factorial(l) - z).exp();
    let mut sum = term;
    let mut k = 0u32;
    loop {
        k += 1;
        term *= q / (k as f64 * (k + l) as f64);
        sum += term;
        if term < 1e-18 * sum && k as f64 > 0.5 * z {
            break;
        }
    }
    sum
}

/// `e^{z} K_l(z) = ∫_0^∞ e^{-z(cosh t - 1)} cosh(l t) dt` by the trapezoid
/// rule, which converges geometrically for this entire integrand.
pub fn bessel_k_scaled(l: u32, z: f64) -> f64 {
    assert!(z > 0.0, "K_l needs z > 0");
    let h = 0.05f64.min(0.2 / z.sqrt());
    let lf = l as f64;
    let f = |t: f64| (-z * (t.cosh() - 1.0) + lf * t).exp() * 0.5 * (1.0 + (-2.0 * lf * t).exp());
    let peak = (lf / z).asinh();
    let mut sum = 0.5 * f(0.0);
    let mut j = 1u32;
    loop {
        let t = j as f64 * h;
        let v = f(t);
        sum += v;
        if t > peak && v < 1e-18 * sum {
            break;
        }
        j += 1;
    }
    sum * h
}

pub fn bessel_k(l: u32, z: f64) -> f64 {
    bessel_k_scaled(l, z) * (-z).exp()
}

pub fn bessel_i(l: u32, z: f64) -> f64 {
    bessel_i_scaled(l, z) * z.exp()
}

/// `e^{-x} i_l(x)` with `i_l(x) = √(π/2x) I_{l+1/2}(x)`, by Miller's
/// downward recurrence normalized with `i_0(x) = sinh(x)/x`.
pub fn sph_bessel_i_scaled(l: u32, x: f64) -> f64 {
    assert!(x > 0.0, "i_l needs x > 0");
    let start = l as usize + 40 + (2.0 * x) as usize;
    let (mut above, mut cur) = (0.0f64, 1e-280f64);
    let mut at_l = 0.0;
    for j in (1..=start).rev() {
        // i_{j-1} = i_{j+1} + (2j+1)/x · i_j
        let below = above + (2 * j + 1) as f64 / x * cur;
        above = cur;
        cur = below;
        if j - 1 == l as usize {
            at_l = cur;
        }
        if cur.abs() > 1e250 {
            above *= 1e-250;
            cur *= 1e-250;
            at_l *= 1e-250;
        }
    }
    let i0_scaled = -(-2.0 * x).exp_m1() / (2.0 * x);
    at_l / cur * i0_scaled
}

/// `e^{x} k_l(x)` with `k_0(x) = e^{-x}/x`, from the terminating sum
/// `k_l(x) = e^{-x}/x Σ_k (l+k)!/(k!(l-k)!)(2x)^{-k}`.
pub fn sph_bessel_k_scaled(l: u32, x: f64) -> f64 {
    assert!(x > 0.0, "k_l needs x > 0");
    let mut a = 1.0;
    let mut sum = 1.0;
    for k in 0..l {
        a *= ((l + k + 1) as f64) * ((l - k) as f64) / ((k + 1) as f64 * 2.0 * x);
        sum += a;
    }
    sum / x
}

/// Single-layer eigenvalue of mode `l` on a circle, `R I_l(κR) K_l(κR)`.
pub fn circle_single_layer(l: u32, kappa: f64, radius: f64) -> f64 {
    let x = kappa * radius;
    radius * bessel_i_scaled(l, x) * bessel_k_scaled(l, x)
}

/// Single-layer eigenvalue of degree `l` on a sphere, `κR² i_l(κR) k_l(κR)`.
pub fn sphere_single_layer(l: u32, kappa: f64, radius: f64) -> f64 {
    let x = kappa * radius;
    kappa * radius * radius * sph_bessel_i_scaled(l, x) * sph_bessel_k_scaled(l, x)
}

/// `I_l(z)` from `(1/π)∫_0^π e^{z cos θ} cos(lθ) dθ`, periodic trapezoid.
pub fn bessel_i_integral(l: u32, z: f64) -> f64 {
    let m = 64 + 4 * (z as usize + l as usize);
    let h = PI / m as f64;
    let f = |t: f64| (z * (t.cos() - 1.0)).exp() * (l as f64 * t).cos();
    let mut s = 0.5 * (f(0.0) + f(PI));
    for j in 1..m {
        s += f(j as f64 * h);
    }
    s * h / PI * z.exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k0_of_one() {
        assert!((bessel_k(0, 1.0) - 0.421_024_438_240_708_3).abs() < 1e-15);
        assert!((bessel_k(1, 1.0) - 0.601_907_230_197_234_6).abs() < 1e-15);
    }

    #[test]
    fn i_series_matches_integral() {
        for l in [0u32, 1, 5, 12] {
            for z in [0.3, 1.0, 7.5] {
                let a = bessel_i(l, z);
                let b = bessel_i_integral(l, z);
                assert!((a - b).abs() < 1e-13 * a.max(1e-2), "l={l} z={z}: {a} {b}");
            }
        }
    }

    #[test]
    fn wronskians() {
        for l in [0u32, 3, 10, 25] {
            for x in [0.2, 1.0, 4.0, 15.0] {
                // I_l K_{l+1} + I_{l+1} K_l = 1/x
                let w = bessel_i_scaled(l, x) * bessel_k_scaled(l + 1, x) + bessel_i_scaled(l + 1, x) * bessel_k_scaled(l, x);
                assert!((w * x - 1.0).abs() < 1e-12, "l={l} x={x}");
                // i_l k_{l+1} + i_{l+1} k_l = 1/x² in this normalization
                let ws = sph_bessel_i_scaled(l, x) * sph_bessel_k_scaled(l + 1, x)
                    + sph_bessel_i_scaled(l + 1, x) * sph_bessel_k_scaled(l, x);
                assert!((ws * x * x - 1.0).abs() < 1e-12, "sph l={l} x={x}");
            }
        }
    }

    #[test]
    fn spherical_closed_forms() {
        let x: f64 = 0.7;
        assert!((sph_bessel_i_scaled(0, x) * x.exp() - x.sinh() / x).abs() < 1e-15);
        let i1 = (x * x.cosh() - x.sinh()) / (x * x);
        assert!((sph_bessel_i_scaled(1, x) * x.exp() - i1).abs() < 1e-15);
        assert!((sph_bessel_k_scaled(1, x) - (1.0 + 1.0 / x) / x).abs() < 1e-15);
    }

    #[test]
    fn sphere_single_layer_newton_limit() {
        // constant density on a sphere: potential R as κ → 0
        assert!((sphere_single_layer(0, 1e-6, 2.0) - 2.0).abs() < 1e-5);
    }
}
