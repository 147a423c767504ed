//! Closed forms for the one-dimensional Ornstein–Uhlenbeck process `dX = -X dt + dL`.
//!
//! With the half-speed driver the transition law has characteristic function
//! `exp(i xi e^{-t} x) exp(-|xi|^alpha (1 - e^{-alpha t}) / (2 alpha))`, so the
//! invariant law `mu_alpha` is that of `alpha^{-1/alpha} L_1` and `mu_2` is
//! `Normal(0, 1/2)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, ln_gamma};

use crate::distance::{tv_from_densities, GridDensity};
use crate::error::{domain, LabError, Result};
pub use crate::grid::GridSpec;
use crate::quad::GaussRule;

/// Normalization slack tolerated on an inverted density.
pub const DENSITY_MASS_TOLERANCE: f64 = 1e-6;

/// Range of `alpha` on which [`exact_tv_mu`] is resolved by the default grid.
pub const EXACT_TV_ALPHA_RANGE: (f64, f64) = (1.05, 1.9995);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum OuLaw {
    Transition { x: f64, t: f64 },
    Ergodic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuLawSpec {
    pub alpha: f64,
    pub kind: OuLaw,
}

impl OuLawSpec {
    pub fn new(alpha: f64, kind: OuLaw) -> Result<Self> {
        check_alpha(alpha)?;
        if let OuLaw::Transition { t, .. } = kind {
            if !(t >= 0.0) {
                return Err(domain("t", t, "[0, inf)"));
            }
        }
        Ok(Self { alpha, kind })
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 1.0 && alpha <= 2.0) {
        return Err(domain("alpha", alpha, "(1, 2]"));
    }
    Ok(())
}

/// Characteristic function of the transition or invariant law.
pub fn transition_cf(spec: &OuLawSpec, xi: f64) -> Complex64 {
    let a = spec.alpha;
    match spec.kind {
        OuLaw::Transition { x, t } => {
            let modulus = (-xi.abs().powf(a) * (1.0 - (-a * t).exp()) / (2.0 * a)).exp();
            Complex64::from_polar(modulus, xi * (-t).exp() * x)
        }
        OuLaw::Ergodic => Complex64::new(ergodic_cf(a, xi), 0.0),
    }
}

/// `exp(-|xi|^alpha / (2 alpha))`.
pub fn ergodic_cf(alpha: f64, xi: f64) -> f64 {
    (-xi.abs().powf(alpha) / (2.0 * alpha)).exp()
}

/// `e^{-1/4} - e^{-1/(2 alpha)} = mu_2(cos) - mu_alpha(cos)`.
pub fn lb_curve(alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok((-0.25f64).exp() - (-1.0 / (2.0 * alpha)).exp())
}

/// `P_t cos(x) = cos(e^{-t} x) exp(-(1 - e^{-alpha t}) / (2 alpha))`.
pub fn semigroup_cos(alpha: f64, x: f64, t: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if !(t >= 0.0) {
        return Err(domain("t", t, "[0, inf)"));
    }
    Ok(((-t).exp() * x).cos() * (-(1.0 - (-alpha * t).exp()) / (2.0 * alpha)).exp())
}

/// `d/dx P_t 1_{(-inf, 0]}(x)` at `x = 0`: `-e^{-t}` times the density at 0 of
/// the noise part, whose characteristic function is `exp(-c |xi|^alpha)` with
/// `c = (1 - e^{-alpha t}) / (2 alpha)`.
pub fn indicator_gradient_at_zero(alpha: f64, t: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if !(t > 0.0) {
        return Err(domain("t", t, "(0, inf)"));
    }
    let c = (1.0 - (-alpha * t).exp()) / (2.0 * alpha);
    Ok(-(-t).exp() * gamma(1.0 + 1.0 / alpha) / (PI * c.powf(1.0 / alpha)))
}

/// `E|Z|` under `mu_alpha`: `(2 alpha)^{-1/alpha} 2 Gamma(1 - 1/alpha) / pi`.
pub fn ergodic_mean_abs(alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok((2.0 * alpha).powf(-1.0 / alpha) * 2.0 * gamma(1.0 - 1.0 / alpha) / PI)
}

/// Coefficients `c_k` of `p(x) ~ sum_k c_k |x|^{-1 - k alpha}` for the symmetric
/// stable density with characteristic function `exp(-scale |xi|^alpha)`.
pub fn stable_tail_coeffs(alpha: f64, scale: f64, terms: usize) -> Vec<f64> {
    if alpha == 2.0 {
        return Vec::new();
    }
    (1..=terms)
        .map(|k| {
            let kf = k as f64;
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            let s = (PI * alpha * kf / 2.0).sin();
            sign * s * (ln_gamma(alpha * kf + 1.0) - ln_gamma(kf + 1.0) + kf * scale.ln()).exp() / PI
        })
        .collect()
}

/// Quadrature nodes `(xi_j, w_j phi(xi_j) / pi)` for `p(x) = (1/pi) int_0^inf cos(xi x) phi(xi) dxi`.
fn inversion_nodes(alpha: f64, scale: f64, x_abs_max: f64, refine: usize) -> (Vec<f64>, Vec<f64>) {
    let phi = |xi: f64| (-scale * xi.powf(alpha)).exp();
    // phi(cutoff) = e^{-40}
    let cutoff = (40.0 / scale).powf(1.0 / alpha);
    let rule = GaussRule::new(12);
    let width = (PI / x_abs_max.max(1.0)).min(0.5) / refine as f64;
    let mut xs = Vec::new();
    let mut ws = Vec::new();
    // dyadic grading towards 0, where xi^alpha is not smooth
    let mut lo = width * 2f64.powi(-50);
    rule.push_panel(0.0, lo, &mut xs, &mut ws);
    while lo < width {
        let hi = (2.0 * lo).min(width);
        rule.push_panel(lo, hi, &mut xs, &mut ws);
        lo = hi;
    }
    let panels = ((cutoff - width) / width).ceil().max(1.0) as usize;
    let w = (cutoff - width) / panels as f64;
    for k in 0..panels {
        rule.push_panel(width + k as f64 * w, width + (k + 1) as f64 * w, &mut xs, &mut ws);
    }
    let weights = xs.iter().zip(&ws).map(|(&x, &w)| w * phi(x) / PI).collect();
    (xs, weights)
}

/// Evaluates `sum_j w_j cos(xi_j x)` at the grid nodes by rotating `(cos, sin)` pairs
/// along the grid, re-seeding exactly every 256 nodes.
fn cosine_sums(xs: &[f64], weights: &[f64], grid: &GridSpec) -> Vec<f64> {
    use rayon::prelude::*;
    const BLOCK: usize = 256;
    let h = grid.step();
    let (rc, rs): (Vec<f64>, Vec<f64>) = xs.iter().map(|&xi| ((xi * h).cos(), (xi * h).sin())).unzip();
    let mut out = vec![0.0; grid.n_cells + 1];
    out.par_chunks_mut(BLOCK).enumerate().for_each(|(b, chunk)| {
        let x0 = grid.x(b * BLOCK);
        let mut c: Vec<f64> = xs.iter().map(|&xi| (xi * x0).cos()).collect();
        let mut s: Vec<f64> = xs.iter().map(|&xi| (xi * x0).sin()).collect();
        for o in chunk.iter_mut() {
            let mut acc = 0.0;
            for j in 0..xs.len() {
                acc += weights[j] * c[j];
                let cn = c[j] * rc[j] - s[j] * rs[j];
                s[j] = s[j] * rc[j] + c[j] * rs[j];
                c[j] = cn;
            }
            *o = acc;
        }
    });
    out
}

/// Symmetric stable density with characteristic function `exp(-scale |xi|^alpha)`,
/// `1 <= alpha <= 2`, tabulated on `grid` by Fourier inversion.
///
/// Accuracy is checked against a rule with halved panels at every 128th node;
/// the error is reported with the worst node when above `1e-9`.
pub fn stable_density_grid(alpha: f64, scale: f64, grid: &GridSpec) -> Result<GridDensity> {
    if !(1.0..=2.0).contains(&alpha) {
        return Err(domain("alpha", alpha, "[1, 2]"));
    }
    if !(grid.x_min < 0.0 && grid.x_max > 0.0 && grid.n_cells >= 2) {
        return Err(LabError::Invalid("density grid must straddle 0".into()));
    }
    let xmax = grid.x_min.abs().max(grid.x_max);
    let (xs, ws) = inversion_nodes(alpha, scale, xmax, 1);
    let mut values = cosine_sums(&xs, &ws, grid);

    let (fx, fw) = inversion_nodes(alpha, scale, xmax, 2);
    let mut worst = (0.0f64, 0.0f64);
    for i in (0..=grid.n_cells).step_by(128).chain([grid.n_cells]) {
        let x = grid.x(i);
        let fine: f64 = fx.iter().zip(&fw).map(|(xi, w)| w * (xi * x).cos()).sum();
        let err = (fine - values[i]).abs();
        if err > worst.0 {
            worst = (err, x);
        }
    }
    if worst.0 > 1e-9 {
        return Err(LabError::Quadrature {
            x: worst.1,
            error: worst.0,
        });
    }
    for v in values.iter_mut() {
        if *v < 0.0 {
            if *v < -1e-12 {
                return Err(LabError::Quadrature {
                    x: f64::NAN,
                    error: -*v,
                });
            }
            *v = 0.0;
        }
    }
    let density = GridDensity::new(
        grid.x_min,
        grid.x_max,
        values,
        alpha,
        stable_tail_coeffs(alpha, scale, 4),
    )?;
    let mass = density.mass();
    if (mass - 1.0).abs() > DENSITY_MASS_TOLERANCE {
        return Err(LabError::Unnormalized { mass });
    }
    Ok(density)
}

/// Density of `mu_alpha` on `grid`. `alpha = 1` (Cauchy with scale 1/2) is accepted for validation.
pub fn ergodic_density(alpha: f64, grid: &GridSpec) -> Result<GridDensity> {
    if !(1.0..=2.0).contains(&alpha) {
        return Err(domain("alpha", alpha, "(1, 2]"));
    }
    stable_density_grid(alpha, 1.0 / (2.0 * alpha), grid)
}

fn check_exact_range(alpha: f64) -> Result<()> {
    let (lo, hi) = EXACT_TV_ALPHA_RANGE;
    if !(alpha >= lo && alpha <= hi) {
        return Err(domain("alpha", alpha, "[1.05, 1.9995]"));
    }
    Ok(())
}

/// `||mu_alpha - mu_2||_TV` on the default grid.
pub fn exact_tv_mu(alpha: f64) -> Result<f64> {
    check_exact_range(alpha)?;
    let grid = GridSpec::default();
    tv_from_densities(&ergodic_density(alpha, &grid)?, &ergodic_density(2.0, &grid)?)
}

/// [`exact_tv_mu`] for several `alpha`, inverting `mu_2` once.
pub fn exact_tv_curve(alphas: &[f64], grid: &GridSpec) -> Result<Vec<f64>> {
    let gauss = ergodic_density(2.0, grid)?;
    alphas
        .iter()
        .map(|&a| {
            check_exact_range(a)?;
            tv_from_densities(&ergodic_density(a, grid)?, &gauss)
        })
        .collect()
}
