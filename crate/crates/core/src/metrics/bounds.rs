//! Closed-form error bounds guaranteed by the step-size policies, written
//! directly from their statements and kept independent of the solver code.
//!
//! `lambda` is `‖λ*‖`, `t` the horizon `T`, `d` the diameter `D_X`.

use serde::{Deserialize, Serialize};

use crate::problem::ProblemConstants;

/// Guaranteed values for the two error channels at the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelBounds {
    pub infeasibility: f64,
    pub gap: f64,
}

impl ChannelBounds {
    fn both(v: f64) -> Self {
        Self {
            infeasibility: v,
            gap: v,
        }
    }
}

/// `a / b` with the convention `0 / 0 = 0` for terms that vanish together.
fn ratio(a: f64, b: f64) -> f64 {
    if a == 0.0 {
        0.0
    } else {
        a / b
    }
}

/// `H_g(‖λ*‖+1) + L_g D_X [‖λ*‖+1−B]₊ / 2`
pub fn h_star(c: &ProblemConstants, lambda: f64, b: f64) -> f64 {
    c.h_g * (lambda + 1.0) + c.l_g * c.d_x * (lambda + 1.0 - b).max(0.0) / 2.0
}

/// Known-multiplier deterministic policy (`B = ‖λ*‖+1`); same bound on both
/// channels.
pub fn det_known_lambda(c: &ProblemConstants, lambda: f64, t: usize) -> ChannelBounds {
    let (tf, d, b) = (t as f64, c.d_x, lambda + 1.0);
    let v = (3.0 * c.l * d * d + b * d * (c.l_g * d / 2.0 + 6.0 * c.m_g)) / tf
        + 3f64.sqrt() * (c.h + c.h_g * b) * d / tf.sqrt();
    ChannelBounds::both(v)
}

/// Robust deterministic policy with parameter `B` (no `c` term, sum form).
/// Infinite for smooth instances when `B < ‖λ*‖+1`.
pub fn det_b(c: &ProblemConstants, lambda: f64, b: f64, t: usize) -> ChannelBounds {
    let (tf, d) = (t as f64, c.d_x);
    let hs = h_star(c, lambda, b);
    let v = (3.0 * c.l * d * d + b * c.l_g * d * d / 2.0 + 3.0 * c.m_g * d * (b + (lambda + 1.0).powi(2) / b)) / tf
        + 3f64.sqrt() * d / tf.sqrt() * (c.h + ratio(hs * hs, c.h + c.h_g * b));
    ChannelBounds::both(v)
}

/// The deterministic bound in terms of the constant part `η` of the step
/// size actually used (`η_t = L_g B + η`); valid for any `η` meeting the
/// policy's lower bounds, e.g. with a robustness term `c√T` added or in max
/// form.
pub fn det_from_eta(c: &ProblemConstants, lambda: f64, b: f64, eta: f64, t: usize) -> ChannelBounds {
    let (tf, d) = (t as f64, c.d_x);
    let hs = h_star(c, lambda, b);
    let v = (c.l_g * b * d * d + eta * d * d + 6.0 * c.m_g * d * (lambda + 1.0).powi(2) / b) / (2.0 * tf)
        + 3.0 * (c.h * c.h + hs * hs) / (2.0 * eta);
    ChannelBounds::both(v)
}

/// Stochastic-operator policy, expected errors.
pub fn stoch_b(c: &ProblemConstants, lambda: f64, b: f64, sigma: f64, t: usize) -> ChannelBounds {
    let (tf, d) = (t as f64, c.d_x);
    let hs = h_star(c, lambda, b);
    let mix = b + (lambda + 1.0).powi(2) / b;
    let gap = (8.0 * c.l * d * d + b * c.l_g * d * d + 5.0 * c.m_g * d * mix) / tf
        + 4.0 * d / tf.sqrt() * (c.h + 3f64.sqrt() * sigma);
    let infeasibility = (4.0 * c.l * d * d + b * c.l_g * d * d / 2.0 + 3.0 * c.m_g * d * mix) / tf
        + 4.0 * d / tf.sqrt() * (c.h + 2f64.sqrt() * sigma + ratio(hs * hs, c.h + c.h_g * b + 3f64.sqrt() * sigma));
    ChannelBounds { infeasibility, gap }
}

/// Noise levels entering the fully stochastic bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseLevels {
    /// `σ`
    pub sigma_f: f64,
    /// `σ_𝔤`
    pub sigma_g: f64,
    /// `‖σ_Γ‖`
    pub sigma_gamma: f64,
}

/// `σ_{X,g} = √(σ_𝔤² + D_X²‖σ_Γ‖²)`
pub fn sigma_xg(c: &ProblemConstants, noise: &NoiseLevels) -> f64 {
    (noise.sigma_g.powi(2) + c.d_x.powi(2) * noise.sigma_gamma.powi(2)).sqrt()
}

/// The constant `ω` bounding the Jacobian-noise contribution.
pub fn omega(c: &ProblemConstants, lambda: f64, b: f64, noise: &NoiseLevels) -> f64 {
    let (s, sg) = (noise.sigma_f, noise.sigma_gamma);
    if sg == 0.0 {
        return 0.0;
    }
    let hs = h_star(c, lambda, b);
    let first = (6.0 * lambda * lambda + 18.0 * b * b + (8.0 * c.l + c.l_g * b) * b * c.d_x / c.m_g) * sg * sg;
    let second = 4.0
        * (c.h + 2f64.sqrt() * s + ratio(hs * hs, 2.0 * (c.h + c.h_g * b + 2f64.sqrt() * s)) + c.h_g * b / 2.0)
        * b
        * sg;
    2.2 * (first + second).sqrt()
}

/// Fully stochastic policy, expected errors.
pub fn fully_stoch_b(c: &ProblemConstants, lambda: f64, b: f64, noise: &NoiseLevels, t: usize) -> ChannelBounds {
    let (tf, d) = (t as f64, c.d_x);
    let (s, sg) = (noise.sigma_f, noise.sigma_gamma);
    let hs = h_star(c, lambda, b);
    let w = omega(c, lambda, b, noise);
    let sxg = sigma_xg(c, noise);
    let head = ((8.0 * c.l + c.l_g * b) * d + 8.0 * c.m_g) * d;
    let root = tf.sqrt();
    let gap = 3.0 * head / (2.0 * tf)
        + 3.0 * (c.h + 2f64.sqrt() * s + c.h_g * b + sg * b) * d / root
        + ratio(
            (9.0 * w * w + 8.0 * c.h * c.h + 9.0 * s * s) * d,
            4.0 * (c.h + c.h_g * b + 2f64.sqrt() * s + b * sg + 4.0 * c.m_g * b) * root,
        )
        + 9.0 * sxg * b / (8.0 * root);
    let infeasibility = head / (2.0 * tf)
        + 9.0 * c.m_g.max(sg) * d * (lambda + 1.0).powi(2) / (b * tf)
        + (c.h + 2f64.sqrt() * s + c.h_g * b + sg * b) * d / root
        + ratio(
            2.0 * (c.h * c.h + hs * hs + 2.0 * s * s + w * w) * d,
            (c.h + c.h_g * b + 2f64.sqrt() * s + b * sg) * root,
        )
        + 2.0 * sxg / root * (b + 4.0 * (lambda + 1.0).powi(2) / b);
    ChannelBounds { infeasibility, gap }
}

/// `β = 12 M_g² / (c₁² L²)`
pub fn adaptive_beta(c: &ProblemConstants, c1: f64) -> f64 {
    12.0 * c.m_g * c.m_g / (c1 * c1 * c.l * c.l)
}

/// Multiplier bound of the adaptive method:
/// `√(2/β)‖x⁰−x*‖ + (√2+1)‖λ*‖`.
pub fn adaptive_multiplier_bound(beta: f64, x0_dist: f64, lambda: f64) -> f64 {
    (2.0 / beta).sqrt() * x0_dist + (2f64.sqrt() + 1.0) * lambda
}

/// Adaptive method bounds in terms of the realized `Γ_T`.
pub fn adaptive(c: &ProblemConstants, c1: f64, lambda: f64, x0_dist: f64, gamma_sum: f64) -> ChannelBounds {
    let beta = adaptive_beta(c, c1);
    let half = c1 * c.l / 2.0;
    ChannelBounds {
        infeasibility: (half * x0_dist * x0_dist + beta * half * (lambda + 1.0).powi(2)) / gamma_sum,
        gap: half * c.d_x * c.d_x / gamma_sum,
    }
}
