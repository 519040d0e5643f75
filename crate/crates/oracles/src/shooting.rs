//! Radial shooting for bound states of δ and δ′ interactions on circles
//! (`n = 2`) and spheres (`n = 3`). No Bessel functions are used: both
//! solutions come from integrating
//! `u'' + (n-1)/r u' - ℓ/r² u - κ² u = 0` with a fixed-step RK4 scheme in
//! `s = ln r`, where it reads `u_s = v`, `v_s = (ℓ + κ² e^{2s}) u - (n-2) v`
//! with `v = r u'`.

use serde::{Deserialize, Serialize};

use crate::roots::bessel_root_bisect;
use crate::{OracleError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Interaction {
    /// `u` continuous, `u'(R⁺) - u'(R⁻) = -α u(R)`
    Delta { alpha: f64 },
    /// `u'` continuous, `u(R⁺) - u(R⁻) = -β u'(R)`
    DeltaPrime { beta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShootingProblem {
    pub dimension: u32,
    pub order: u32,
    pub radius: f64,
    pub interaction: Interaction,
    /// start of the outward sweep
    pub r_min: f64,
    /// the inward sweep starts at `R + decay_lengths/κ`
    pub decay_lengths: f64,
    /// largest `h·rate` per RK4 step, with `rate = √(ℓ + κ²r²)`
    pub step: f64,
}

impl ShootingProblem {
    pub fn new(dimension: u32, order: u32, radius: f64, interaction: Interaction) -> Self {
        Self { dimension, order, radius, interaction, r_min: 1e-4 * radius, decay_lengths: 30.0, step: 2e-3 }
    }

    pub fn with_step(mut self, step: f64) -> Self {
        self.step = step;
        self
    }

    fn validate(&self, kappa: f64) -> Result<()> {
        let ok = matches!(self.dimension, 2 | 3)
            && self.radius > 0.0
            && self.r_min > 0.0
            && self.r_min <= 1e-4 * self.radius
            && self.decay_lengths >= 30.0
            && self.step > 0.0
            && kappa > 0.0
            && kappa.is_finite();
        if ok {
            Ok(())
        } else {
            Err(OracleError::InvalidInput(format!("invalid shooting problem at κ = {kappa}: {self:?}")))
        }
    }

    fn centrifugal(&self) -> f64 {
        let l = self.order as f64;
        if self.dimension == 2 {
            l * l
        } else {
            l * (l + 1.0)
        }
    }
}

/// Integrates `(u, v)` from `s0` to `s1` and returns the end state, rescaled
/// freely (only the ratio `v/u` is meaningful).
fn sweep(p: &ShootingProblem, kappa: f64, s0: f64, s1: f64, mut y: [f64; 2]) -> [f64; 2] {
    let c = p.centrifugal();
    let damp = p.dimension as f64 - 2.0;
    let k2 = kappa * kappa;
    let rhs = |s: f64, y: [f64; 2]| [y[1], (c + k2 * (2.0 * s).exp()) * y[0] - damp * y[1]];
    let rate = (c + k2 * (2.0 * s0.max(s1)).exp() + 1.0).sqrt();
    let n = (((s1 - s0).abs() * rate / p.step).ceil() as usize).max(16);
    let h = (s1 - s0) / n as f64;
    for i in 0..n {
        let s = s0 + i as f64 * h;
        let k1 = rhs(s, y);
        let k2v = rhs(s + 0.5 * h, [y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1]]);
        let k3 = rhs(s + 0.5 * h, [y[0] + 0.5 * h * k2v[0], y[1] + 0.5 * h * k2v[1]]);
        let k4 = rhs(s + h, [y[0] + h * k3[0], y[1] + h * k3[1]]);
        y[0] += h / 6.0 * (k1[0] + 2.0 * k2v[0] + 2.0 * k3[0] + k4[0]);
        y[1] += h / 6.0 * (k1[1] + 2.0 * k2v[1] + 2.0 * k3[1] + k4[1]);
        let m = y[0].abs().max(y[1].abs());
        if m > 1e150 || m < 1e-150 {
            y[0] /= m;
            y[1] /= m;
        }
    }
    y
}

/// `(r u'/u)` at `R` for the regular interior and the decaying exterior
/// solution.
pub fn log_derivatives(p: &ShootingProblem, kappa: f64) -> Result<(f64, f64)> {
    p.validate(kappa)?;
    let nu = p.order as f64;
    let n = p.dimension as f64;
    let r0 = p.r_min;
    let c1 = kappa * kappa / (2.0 * (2.0 * nu + n));
    let inner0 = [1.0 + c1 * r0 * r0, nu + (nu + 2.0) * c1 * r0 * r0];
    let inner = sweep(p, kappa, r0.ln(), p.radius.ln(), inner0);
    let r_max = p.radius + p.decay_lengths / kappa;
    let outer0 = [1.0, -kappa * r_max - 0.5 * (n - 1.0)];
    let outer = sweep(p, kappa, r_max.ln(), p.radius.ln(), outer0);
    Ok((inner[1] / inner[0], outer[1] / outer[0]))
}

/// Interior and exterior Neumann-to-Dirichlet values `m_i = u_i/u_i'` and
/// `m_e = -u_e/u_e'` at `R`.
pub fn shoot_weyl(p: &ShootingProblem, kappa: f64) -> Result<(f64, f64)> {
    let (li, le) = log_derivatives(p, kappa)?;
    Ok((p.radius / li, -p.radius / le))
}

/// Interface determinant, normalized so it is independent of the scale of
/// either solution: `u_e'/u_e - u_i'/u_i + α` for δ and
/// `u_e/u_e' - u_i/u_i' + β` for δ′. Its zeros are the bound states.
pub fn shoot_matching(p: &ShootingProblem, kappa: f64) -> Result<f64> {
    let (li, le) = log_derivatives(p, kappa)?;
    let r = p.radius;
    Ok(match p.interaction {
        Interaction::Delta { alpha } => (le - li) / r + alpha,
        Interaction::DeltaPrime { beta } => r * (1.0 / le - 1.0 / li) + beta,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShootingState {
    pub order: u32,
    pub kappa: f64,
    pub lambda: f64,
    pub multiplicity: usize,
}

/// All bound states with angular order `≤ max_order` and `κ` in the bracket,
/// one bisection per order where the determinant changes sign.
pub fn shooting_bound_states(
    dimension: u32,
    radius: f64,
    interaction: Interaction,
    max_order: u32,
    kappa_lo: f64,
    kappa_hi: f64,
) -> Result<Vec<ShootingState>> {
    let mut out = Vec::new();
    for l in 0..=max_order {
        let p = ShootingProblem::new(dimension, l, radius, interaction);
        let f = |k: f64| shoot_matching(&p, k).unwrap_or(f64::NAN);
        if let Some(kappa) = bessel_root_bisect(f, kappa_lo, kappa_hi)?.root() {
            let multiplicity = if dimension == 2 {
                if l == 0 {
                    1
                } else {
                    2
                }
            } else {
                2 * l as usize + 1
            };
            out.push(ShootingState { order: l, kappa, lambda: -kappa * kappa, multiplicity });
        }
    }
    out.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bessel::{bessel_i_scaled, bessel_k_scaled, circle_single_layer, sphere_single_layer};

    #[test]
    fn free_determinant_never_vanishes() {
        for dim in [2, 3] {
            for l in [0, 1, 4] {
                let p = ShootingProblem::new(dim, l, 1.0, Interaction::Delta { alpha: 0.0 });
                for k in [0.05, 0.5, 2.0, 9.0] {
                    assert!(shoot_matching(&p, k).unwrap() < 0.0);
                }
            }
        }
    }

    #[test]
    fn log_derivatives_match_bessel() {
        for l in [0u32, 2, 7] {
            for k in [0.3, 1.0, 3.0] {
                let p = ShootingProblem::new(2, l, 1.0, Interaction::Delta { alpha: 0.0 });
                let (li, le) = log_derivatives(&p, k).unwrap();
                // x I_l'/I_l = l + x I_{l+1}/I_l, x K_l'/K_l = l - x K_{l+1}/K_l
                let wi = l as f64 + k * bessel_i_scaled(l + 1, k) / bessel_i_scaled(l, k);
                let we = l as f64 - k * bessel_k_scaled(l + 1, k) / bessel_k_scaled(l, k);
                assert!((li - wi).abs() < 1e-9 * wi.abs().max(1.0), "l={l} k={k}: {li} {wi}");
                assert!((le - we).abs() < 1e-9 * we.abs(), "l={l} k={k}: {le} {we}");
            }
        }
    }

    #[test]
    fn delta_root_matches_single_layer_root() {
        let p = ShootingProblem::new(2, 0, 1.0, Interaction::Delta { alpha: 2.0 });
        let a = bessel_root_bisect(|k| shoot_matching(&p, k).unwrap(), 1e-4, 10.0).unwrap().root().unwrap();
        let b = bessel_root_bisect(|k| 2.0 * circle_single_layer(0, k, 1.0) - 1.0, 1e-4, 10.0).unwrap().root().unwrap();
        assert!((a - b).abs() < 1e-8 * b, "{a} {b}");
    }

    #[test]
    fn step_halving_is_stable() {
        let p = ShootingProblem::new(2, 1, 1.0, Interaction::Delta { alpha: 8.0 });
        let q = p.with_step(p.step / 2.0);
        let a = bessel_root_bisect(|k| shoot_matching(&p, k).unwrap(), 0.1, 10.0).unwrap().root().unwrap();
        let b = bessel_root_bisect(|k| shoot_matching(&q, k).unwrap(), 0.1, 10.0).unwrap().root().unwrap();
        assert!((a - b).abs() < 1e-9 * b, "{a} {b}");
    }

    #[test]
    fn sphere_mode_zero_below_threshold_has_no_root() {
        // α m̃_0 < α R < 1 for every κ
        let f = |k: f64| 0.9 * sphere_single_layer(0, k, 1.0) - 1.0;
        assert!(bessel_root_bisect(f, 1e-4, 10.0).unwrap().root().is_none());
        let states = shooting_bound_states(3, 1.0, Interaction::Delta { alpha: 0.9 }, 3, 1e-4, 10.0).unwrap();
        assert!(states.is_empty());
    }

    #[test]
    fn delta_prime_matches_neumann_sum() {
        // roots of m_i + m_e = β with m_i, m_e from Bessel ratios
        let beta = 1.0;
        for l in [0u32, 1] {
            let p = ShootingProblem::new(2, l, 1.0, Interaction::DeltaPrime { beta });
            let f = |k: f64| {
                let li = l as f64 + k * bessel_i_scaled(l + 1, k) / bessel_i_scaled(l, k);
                let le = l as f64 - k * bessel_k_scaled(l + 1, k) / bessel_k_scaled(l, k);
                1.0 / le - 1.0 / li + beta
            };
            let a = bessel_root_bisect(|k| shoot_matching(&p, k).unwrap(), 1e-3, 20.0).unwrap().root();
            let b = bessel_root_bisect(f, 1e-3, 20.0).unwrap().root();
            match (a, b) {
                (Some(a), Some(b)) => assert!((a - b).abs() < 1e-8 * b),
                (None, None) => {}
                other => panic!("l={l}: {other:?}"),
            }
        }
    }

    #[test]
    fn multiplicities() {
        let s = shooting_bound_states(3, 1.0, Interaction::Delta { alpha: 8.0 }, 6, 1e-3, 20.0).unwrap();
        assert!(s.iter().all(|x| x.multiplicity == 2 * x.order as usize + 1));
        assert!(s.len() >= 3);
    }
}
