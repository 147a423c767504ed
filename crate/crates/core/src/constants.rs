//! Closed-form constants of the half-speed stable jump kernel.
//!
//! `A(d, alpha) |z|^{-d-alpha}` is the Lévy density of the process with
//! characteristic function `exp(-t |xi|^alpha / 2)`, and `omega_{d-1}` is the
//! surface measure of the unit sphere in `R^d`. Everything is evaluated in
//! log space so that `d` in the tens does not overflow.

use std::f64::consts::{LN_2, PI};

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{domain, Result};

fn ln_pi() -> f64 {
    PI.ln()
}

fn check_dim(d: usize) -> Result<()> {
    if d == 0 {
        return Err(domain("d", 0.0, "d >= 1"));
    }
    Ok(())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(domain("alpha", alpha, "(0, 2)"));
    }
    Ok(())
}

/// `ln A(d, alpha)`; all Gamma arguments are positive on the valid domain.
pub fn ln_a_const(d: usize, alpha: f64) -> Result<f64> {
    check_dim(d)?;
    check_alpha(alpha)?;
    let d = d as f64;
    Ok(alpha.ln() + ln_gamma((d + alpha) / 2.0)
        - (2.0 - alpha) * LN_2
        - d / 2.0 * ln_pi()
        - ln_gamma(1.0 - alpha / 2.0))
}

/// `A(d, alpha) = alpha Gamma((d+alpha)/2) / (2^{2-alpha} pi^{d/2} Gamma(1-alpha/2))`.
pub fn a_const(d: usize, alpha: f64) -> Result<f64> {
    Ok(ln_a_const(d, alpha)?.exp())
}

pub fn ln_omega_sphere(d: usize) -> Result<f64> {
    check_dim(d)?;
    let d = d as f64;
    Ok(LN_2 + d / 2.0 * ln_pi() - ln_gamma(d / 2.0))
}

/// `omega_{d-1} = 2 pi^{d/2} / Gamma(d/2)`.
pub fn omega_sphere(d: usize) -> Result<f64> {
    Ok(ln_omega_sphere(d)?.exp())
}

/// `A(d, alpha) omega_{d-1} / (d (2 - alpha))`, which tends to 1 as `alpha -> 2`.
pub fn ratio_to_limit(d: usize, alpha: f64) -> Result<f64> {
    let ln = ln_a_const(d, alpha)? + ln_omega_sphere(d)? - (d as f64).ln() - (2.0 - alpha).ln();
    Ok(ln.exp())
}

/// First absolute moment of the big jumps: `int_{|z|>=1} |z| A |z|^{-d-alpha} dz = A omega / (alpha - 1)`.
pub fn jump_tail_mass(d: usize, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if alpha <= 1.0 {
        return Err(domain("alpha", alpha, "(1, 2)"));
    }
    Ok((ln_a_const(d, alpha)? + ln_omega_sphere(d)?).exp() / (alpha - 1.0))
}

/// `E[S_t^{-1}] = Gamma(1 + 2/alpha) 2^{2/alpha} t^{-2/alpha} / 2`.
pub fn s_inverse_moment(alpha: f64, t: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if !(t > 0.0 && t.is_finite()) {
        return Err(domain("t", t, "(0, inf)"));
    }
    let p = 2.0 / alpha;
    Ok((ln_gamma(1.0 + p) + p * LN_2 - p * t.ln() - LN_2).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantReport {
    pub d: usize,
    pub alpha: f64,
    #[serde(rename = "A")]
    pub a: f64,
    pub omega: f64,
    pub ratio: f64,
    /// Only defined for `alpha > 1`.
    pub tail_mass: Option<f64>,
}

impl ConstantReport {
    pub fn compute(d: usize, alpha: f64) -> Result<Self> {
        Ok(Self {
            d,
            alpha,
            a: a_const(d, alpha)?,
            omega: omega_sphere(d)?,
            ratio: ratio_to_limit(d, alpha)?,
            tail_mass: if alpha > 1.0 {
                Some(jump_tail_mass(d, alpha)?)
            } else {
                None
            },
        })
    }
}

/// Observed supremum of `|ratio - 1| / ((2 - alpha) ln(1 + d))` over a grid.
/// This is an empirical stand-in for the implicit constant in the ratio estimate.
pub fn ratio_error_constant(dims: &[usize], alphas: &[f64]) -> Result<f64> {
    let mut sup = 0.0f64;
    for &d in dims {
        for &a in alphas {
            let r = ratio_to_limit(d, a)?;
            sup = sup.max((r - 1.0).abs() / ((2.0 - a) * (1.0 + d as f64).ln()));
        }
    }
    Ok(sup)
}
