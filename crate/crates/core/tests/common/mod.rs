#![allow(dead_code)]

use std::f64::consts::PI;

use statrs::distribution::{ContinuousCDF, Normal};

pub fn normal_cdf(x: f64, sd: f64) -> f64 {
    Normal::new(0.0, sd).unwrap().cdf(x)
}

pub fn normal_pdf(x: f64, var: f64) -> f64 {
    (-0.5 * x * x / var).exp() / (2.0 * PI * var).sqrt()
}

/// Adaptive Simpson quadrature.
pub fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            return left + right + (left + right - whole) / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 30)
}

/// Density of the symmetric stable law with characteristic function
/// `exp(-|xi|^alpha)`, `1 < alpha < 2`, from Zolotarev's integral representation.
pub fn zolotarev_unit_density(alpha: f64, x: f64) -> f64 {
    let x = x.abs();
    if x < 1e-10 {
        return statrs::function::gamma::gamma(1.0 + 1.0 / alpha) / PI;
    }
    let q = alpha / (alpha - 1.0);
    let v = |th: f64| -> f64 {
        let c = th.cos();
        (c / (alpha * th).sin()).powf(q) * ((alpha - 1.0) * th).cos() / c
    };
    let xq = x.powf(q);
    let g = |th: f64| -> f64 {
        if th <= 0.0 || th >= PI / 2.0 {
            return 0.0;
        }
        let vt = v(th);
        if !(vt > 0.0 && vt.is_finite()) {
            return 0.0;
        }
        (vt.ln() - xq * vt).exp()
    };
    // the peak sits near 0 for small x and near pi/2 for large x: grade dyadically towards both ends
    let mut cuts = vec![0.0, PI / 2.0];
    for k in 0..60 {
        let e = PI / 4.0 * 0.5f64.powi(k);
        cuts.push(e);
        cuts.push(PI / 2.0 - e);
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let panels: Vec<(f64, f64)> = cuts.windows(2).map(|w| (w[0], w[1])).collect();
    let coarse: f64 = panels
        .iter()
        .map(|&(a, b)| (b - a) / 6.0 * (g(a) + 4.0 * g(0.5 * (a + b)) + g(b)))
        .sum();
    let tol = 1e-11 * coarse.abs().max(1e-300) / panels.len() as f64;
    let integral: f64 = panels.iter().map(|&(a, b)| simpson(&g, a, b, tol)).sum();
    alpha * x.powf(1.0 / (alpha - 1.0)) / (PI * (alpha - 1.0)) * integral
}

/// Same law with characteristic function `exp(-c |xi|^alpha)`.
pub fn zolotarev_density(alpha: f64, c: f64, x: f64) -> f64 {
    let s = c.powf(1.0 / alpha);
    zolotarev_unit_density(alpha, x / s) / s
}

pub fn cauchy_pdf(x: f64, scale: f64) -> f64 {
    scale / (PI * (scale * scale + x * x))
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}
