//! Distances between laws.
//!
//! Total variation uses the normalization `sup_{|h| <= 1} |mu(h) - nu(h)|`,
//! which equals `int |p - q|` for densities and has maximum value 2. The
//! half-normalized variant is never used in this crate.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use statrs::function::erf::erfc;

use crate::error::{LabError, Result};
use crate::sampling::SampleSet;

/// Absolute slack accepted on the total mass of a [`GridDensity`].
pub const MASS_TOLERANCE: f64 = 1e-4;

/// Clip level of the pooled quantiles in histogram-based TV.
pub const CLIP_QUANTILE: f64 = 1e-4;

/// Density tabulated at the `n_cells + 1` nodes of a uniform grid, with a
/// power-law model for the mass outside the grid:
/// `p(x) ~ sum_k tail_coeffs[k-1] |x|^{-1 - k * tail_exponent}` on both sides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDensity {
    pub x_min: f64,
    pub x_max: f64,
    pub n_cells: usize,
    pub values: Vec<f64>,
    pub tail_exponent: f64,
    pub tail_coeffs: Vec<f64>,
}

impl GridDensity {
    pub fn new(x_min: f64, x_max: f64, values: Vec<f64>, tail_exponent: f64, tail_coeffs: Vec<f64>) -> Result<Self> {
        if !(x_min < x_max) || values.len() < 2 {
            return Err(LabError::Invalid(format!(
                "degenerate grid [{x_min}, {x_max}] with {} nodes",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0)) {
            return Err(LabError::Invalid(format!("negative or non-finite density value {v}")));
        }
        if !tail_coeffs.is_empty() && !(x_min < 0.0 && x_max > 0.0) {
            return Err(LabError::Invalid("power tails need a grid straddling 0".into()));
        }
        Ok(Self {
            x_min,
            x_max,
            n_cells: values.len() - 1,
            values,
            tail_exponent,
            tail_coeffs,
        })
    }

    /// Density with no mass outside the grid.
    pub fn compact(x_min: f64, x_max: f64, values: Vec<f64>) -> Result<Self> {
        Self::new(x_min, x_max, values, f64::INFINITY, Vec::new())
    }

    /// Tabulates `f` on the grid.
    pub fn tabulate(x_min: f64, x_max: f64, n_cells: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let h = (x_max - x_min) / n_cells as f64;
        Self::compact(x_min, x_max, (0..=n_cells).map(|i| f(x_min + i as f64 * h)).collect())
    }

    pub fn step(&self) -> f64 {
        (self.x_max - self.x_min) / self.n_cells as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.step()
    }

    /// Leading tail coefficient (0 for light tails).
    pub fn tail_c(&self) -> f64 {
        self.tail_coeffs.first().copied().unwrap_or(0.0)
    }

    /// Model mass on `(-inf, x_min)` and `(x_max, inf)`.
    pub fn tail_masses(&self) -> (f64, f64) {
        let side = |l: f64| -> f64 {
            self.tail_coeffs
                .iter()
                .enumerate()
                .map(|(k, c)| {
                    let e = (k + 1) as f64 * self.tail_exponent;
                    c * l.powf(-e) / e
                })
                .sum()
        };
        if self.tail_coeffs.is_empty() {
            (0.0, 0.0)
        } else {
            (side(-self.x_min), side(self.x_max))
        }
    }

    pub fn grid_mass(&self) -> f64 {
        trapezoid(&self.values, self.step())
    }

    pub fn mass(&self) -> f64 {
        let (l, r) = self.tail_masses();
        self.grid_mass() + l + r
    }

    pub fn same_grid(&self, other: &GridDensity) -> bool {
        self.x_min == other.x_min && self.x_max == other.x_max && self.n_cells == other.n_cells
    }
}

pub(crate) fn trapezoid(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    let inner: f64 = values[1..n - 1].iter().sum();
    h * (inner + 0.5 * (values[0] + values[n - 1]))
}

/// `int |p - q|` by the trapezoidal rule plus the difference of the modelled tail masses.
pub fn tv_from_densities(p: &GridDensity, q: &GridDensity) -> Result<f64> {
    if !p.same_grid(q) {
        return Err(LabError::GridMismatch(format!(
            "[{}, {}]/{} vs [{}, {}]/{}",
            p.x_min, p.x_max, p.n_cells, q.x_min, q.x_max, q.n_cells
        )));
    }
    for d in [p, q] {
        let mass = d.mass();
        if (mass - 1.0).abs() > MASS_TOLERANCE {
            return Err(LabError::Unnormalized { mass });
        }
    }
    let diff: Vec<f64> = p.values.iter().zip(&q.values).map(|(a, b)| (a - b).abs()).collect();
    let (pl, pr) = p.tail_masses();
    let (ql, qr) = q.tail_masses();
    let tv = trapezoid(&diff, p.step()) + (pl - ql).abs() + (pr - qr).abs();
    Ok(tv.clamp(0.0, 2.0))
}

/// Machine-readable outcome of a sample-based distance estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceReport {
    pub estimator: String,
    pub value: f64,
    pub error_bound: f64,
    pub n: usize,
    pub params: serde_json::Value,
}

fn require_scalar(s: &SampleSet) -> Result<()> {
    if s.dim() != 1 {
        return Err(LabError::Dimension {
            expected: 1,
            got: s.dim(),
        });
    }
    Ok(())
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Linear-interpolated empirical quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Default histogram size `ceil(N^{1/3})`.
pub fn default_bins(n: usize) -> usize {
    ((n as f64).cbrt().ceil() as usize).max(10)
}

/// Equal-mass bin edges of the pooled sample, clipped at the [`CLIP_QUANTILE`] quantiles.
fn pooled_edges(pooled_sorted: &[f64], bins: usize) -> Vec<f64> {
    let lo = quantile(pooled_sorted, CLIP_QUANTILE);
    let hi = quantile(pooled_sorted, 1.0 - CLIP_QUANTILE);
    let mut edges: Vec<f64> = (0..=bins)
        .map(|k| {
            let q = CLIP_QUANTILE + (1.0 - 2.0 * CLIP_QUANTILE) * k as f64 / bins as f64;
            quantile(pooled_sorted, q).clamp(lo, hi)
        })
        .collect();
    edges.dedup();
    edges
}

/// Counts per cell: index 0 is below the first edge, the last index above the last edge.
fn bin_counts(values: &[f64], edges: &[f64]) -> Vec<usize> {
    let m = edges.len() - 1;
    let mut counts = vec![0usize; m + 2];
    for &v in values {
        let k = edges.partition_point(|&e| e <= v);
        let k = if k == m + 1 && v == edges[m] { m.max(1) } else { k };
        counts[k] += 1;
    }
    counts
}

fn histogram_tv(a: &[f64], b: &[f64], edges: &[f64]) -> f64 {
    let ca = bin_counts(a, edges);
    let cb = bin_counts(b, edges);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    ca.iter()
        .zip(&cb)
        .map(|(&x, &y)| (x as f64 / na - y as f64 / nb).abs())
        .sum::<f64>()
        .min(2.0)
}

/// Histogram TV with equal-mass bins shared by both samples.
///
/// Binning biases the estimate downward for overlapping laws, while sampling
/// noise biases it upward; the latter is measured as the self-distance of
/// the two halves of `a` (rescaled by `1/sqrt 2`) and reported as
/// `params.noise_floor`. The error bound is the noise floor plus the pooled
/// mass outside the clip quantiles.
pub fn tv_from_samples_1d(a: &SampleSet, b: &SampleSet, bins: usize) -> Result<DistanceReport> {
    require_scalar(a)?;
    require_scalar(b)?;
    if bins < 10 {
        return Err(LabError::Invalid(format!("bins = {bins}, need at least 10")));
    }
    let pooled: Vec<f64> = a.values().iter().chain(b.values()).copied().collect();
    let pooled = sorted(&pooled);
    let edges = pooled_edges(&pooled, bins);
    let value = histogram_tv(a.values(), b.values(), &edges);

    let clipped = pooled
        .iter()
        .filter(|&&v| v < edges[0] || v > edges[edges.len() - 1])
        .count() as f64
        / pooled.len() as f64;
    let noise_floor = if a.len() >= 2 * bins {
        let even: Vec<f64> = a.values().iter().step_by(2).copied().collect();
        let odd: Vec<f64> = a.values().iter().skip(1).step_by(2).copied().collect();
        histogram_tv(&even, &odd, &edges) / std::f64::consts::SQRT_2
    } else {
        f64::NAN
    };
    Ok(DistanceReport {
        estimator: "tv-histogram-1d".into(),
        value,
        error_bound: noise_floor + clipped,
        n: a.len().min(b.len()),
        params: json!({
            "bins": edges.len() - 1,
            "noise_floor": noise_floor,
            "clipped_mass": clipped,
            "bias": "downward for overlapping laws (binning), upward by about the noise floor",
        }),
    })
}

/// Product-binned histogram TV for `d <= 3`; biased, intended as a diagnostic only.
pub fn tv_from_samples_nd(a: &SampleSet, b: &SampleSet, bins_per_axis: usize) -> Result<DistanceReport> {
    let d = a.dim();
    if b.dim() != d {
        return Err(LabError::Dimension {
            expected: d,
            got: b.dim(),
        });
    }
    if d > 3 {
        return Err(LabError::Invalid(format!("histogram TV limited to d <= 3, got {d}")));
    }
    if bins_per_axis < 2 {
        return Err(LabError::Invalid("need at least 2 bins per axis".into()));
    }
    let axes: Vec<Vec<f64>> = (0..d)
        .map(|j| {
            let pooled: Vec<f64> = a.rows().chain(b.rows()).map(|r| r[j]).collect();
            pooled_edges(&sorted(&pooled), bins_per_axis)
        })
        .collect();
    let cell = |row: &[f64]| -> usize {
        let mut idx = 0;
        for (j, edges) in axes.iter().enumerate() {
            let m = edges.len() - 1;
            let k = edges.partition_point(|&e| e <= row[j]);
            let k = if k == m + 1 && row[j] == edges[m] { m.max(1) } else { k };
            idx = idx * (m + 2) + k;
        }
        idx
    };
    let total: usize = axes.iter().map(|e| e.len() + 1).product();
    let mut ca = vec![0usize; total];
    let mut cb = vec![0usize; total];
    a.rows().for_each(|r| ca[cell(r)] += 1);
    b.rows().for_each(|r| cb[cell(r)] += 1);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let value = ca
        .iter()
        .zip(&cb)
        .map(|(&x, &y)| (x as f64 / na - y as f64 / nb).abs())
        .sum::<f64>()
        .min(2.0);
    Ok(DistanceReport {
        estimator: "tv-histogram-nd".into(),
        value,
        error_bound: f64::NAN,
        n: a.len().min(b.len()),
        params: json!({ "d": d, "bins_per_axis": bins_per_axis, "biased": true }),
    })
}

/// Exact empirical W1 in one dimension: `int |F_a - F_b|`.
/// For equal sizes this is the mean absolute difference of the sorted samples.
pub fn wasserstein1_1d(a: &SampleSet, b: &SampleSet) -> Result<f64> {
    require_scalar(a)?;
    require_scalar(b)?;
    let sa = sorted(a.values());
    let sb = sorted(b.values());
    if sa.len() == sb.len() {
        return Ok(sa.iter().zip(&sb).map(|(x, y)| (x - y).abs()).sum::<f64>() / sa.len() as f64);
    }
    let (na, nb) = (sa.len() as f64, sb.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut prev = sa[0].min(sb[0]);
    let mut w = 0.0;
    while i < sa.len() || j < sb.len() {
        let next = match (sa.get(i), sb.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        w += (i as f64 / na - j as f64 / nb).abs() * (next - prev);
        while i < sa.len() && sa[i] == next {
            i += 1;
        }
        while j < sb.len() && sb[j] == next {
            j += 1;
        }
        prev = next;
    }
    Ok(w)
}

/// `max_xi max(|E cos(xi X) - E cos(xi Y)|, |E sin(xi X) - E sin(xi Y)|)`.
///
/// Each test function has sup norm 1, so up to Monte Carlo error the value
/// is a lower bound on the TV distance. The error bound is three standard
/// errors of the maximizing difference, assuming independent samples.
pub fn tv_cf_lower_bound(a: &SampleSet, b: &SampleSet, xis: &[f64]) -> Result<DistanceReport> {
    require_scalar(a)?;
    require_scalar(b)?;
    let vecs: Vec<Vec<f64>> = xis.iter().map(|&x| vec![x]).collect();
    cf_bound(a, b, &vecs, false)
}

/// As [`tv_cf_lower_bound`] for `d`-dimensional samples and frequency vectors.
pub fn tv_cf_lower_bound_nd(a: &SampleSet, b: &SampleSet, xis: &[Vec<f64>]) -> Result<DistanceReport> {
    cf_bound(a, b, xis, false)
}

/// As [`tv_cf_lower_bound_nd`] for row-wise coupled samples (common random
/// numbers); the standard error comes from the paired differences.
pub fn tv_cf_lower_bound_paired(a: &SampleSet, b: &SampleSet, xis: &[Vec<f64>]) -> Result<DistanceReport> {
    if a.len() != b.len() {
        return Err(LabError::Invalid(format!(
            "paired samples need equal sizes, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    cf_bound(a, b, xis, true)
}

fn cf_bound(a: &SampleSet, b: &SampleSet, xis: &[Vec<f64>], paired: bool) -> Result<DistanceReport> {
    if xis.is_empty() {
        return Err(LabError::Empty("frequency list"));
    }
    if a.dim() != b.dim() {
        return Err(LabError::Dimension {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    let mut best = (f64::NEG_INFINITY, 0.0, 0usize);
    for (k, xi) in xis.iter().enumerate() {
        if xi.len() != a.dim() {
            return Err(LabError::Dimension {
                expected: a.dim(),
                got: xi.len(),
            });
        }
        let phases = |s: &SampleSet| -> Vec<(f64, f64)> {
            s.rows()
                .map(|r| r.iter().zip(xi).map(|(x, k)| x * k).sum::<f64>().sin_cos())
                .collect()
        };
        let pa = phases(a);
        let pb = phases(b);
        for part in 0..2 {
            let pick = |p: &(f64, f64)| if part == 0 { p.1 } else { p.0 };
            let (diff, se) = if paired {
                let d: Vec<f64> = pa.iter().zip(&pb).map(|(x, y)| pick(x) - pick(y)).collect();
                let (m, v) = mean_var(&d);
                (m, (v / d.len() as f64).sqrt())
            } else {
                let xa: Vec<f64> = pa.iter().map(pick).collect();
                let xb: Vec<f64> = pb.iter().map(pick).collect();
                let (ma, va) = mean_var(&xa);
                let (mb, vb) = mean_var(&xb);
                (ma - mb, (va / xa.len() as f64 + vb / xb.len() as f64).sqrt())
            };
            if diff.abs() > best.0 {
                best = (diff.abs(), se, k);
            }
        }
    }
    Ok(DistanceReport {
        estimator: if paired {
            "tv-cf-lower-bound-paired"
        } else {
            "tv-cf-lower-bound"
        }
        .into(),
        value: best.0.min(2.0),
        error_bound: 3.0 * best.1,
        n: a.len().min(b.len()),
        params: json!({ "xis": xis, "argmax": xis[best.2], "std_error": best.1 }),
    })
}

pub(crate) fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = if x.len() > 1 {
        x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (m, v)
}

/// Equal-weight mixture of Gaussians `N(mean, variances[k])`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    pub mean: f64,
    pub variances: Vec<f64>,
}

impl GaussianMixture {
    pub fn new(mean: f64, variances: Vec<f64>) -> Result<Self> {
        if variances.is_empty() {
            return Err(LabError::Empty("mixture"));
        }
        if let Some(v) = variances.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
            return Err(LabError::Invalid(format!("mixture variance {v}")));
        }
        Ok(Self { mean, variances })
    }

    pub fn density(&self, x: f64) -> f64 {
        let u = (x - self.mean).powi(2);
        self.variances.iter().map(|v| gauss(u, *v)).sum::<f64>() / self.variances.len() as f64
    }

    /// Mass outside `[mean - r, mean + r]`.
    pub fn mass_outside(&self, r: f64) -> f64 {
        self.variances.iter().map(|v| erfc(r / (2.0 * v).sqrt())).sum::<f64>() / self.variances.len() as f64
    }
}

#[inline]
fn gauss(u: f64, v: f64) -> f64 {
    (-0.5 * u / v).exp() / (2.0 * PI * v).sqrt()
}

/// TV between a Gaussian mixture and `N(mean, var)` by trapezoid quadrature on
/// `[mean - half_width, mean + half_width]` plus the mass outside it. The
/// noise floor is the TV between the mixtures of the two halves of the
/// components, divided by `sqrt 2`.
pub fn tv_mixture_gaussian(
    mix: &GaussianMixture,
    mean: f64,
    var: f64,
    half_width: f64,
    cells: usize,
) -> Result<DistanceReport> {
    if !(var > 0.0) || !(half_width > 0.0) || cells < 2 {
        return Err(LabError::Invalid("need var > 0, half_width > 0, cells >= 2".into()));
    }
    let n = mix.variances.len();
    if n < 2 {
        return Err(LabError::Empty("mixture halves"));
    }
    let h = 2.0 * half_width / cells as f64;
    // (normalization, exponent factor) per component
    let coeffs: Vec<(f64, f64)> = mix
        .variances
        .iter()
        .map(|v| (1.0 / (2.0 * PI * v).sqrt(), -0.5 / v))
        .collect();
    let (first, second) = coeffs.split_at(n / 2);
    let rows: Vec<(f64, f64)> = (0..=cells)
        .into_par_iter()
        .map(|i| {
            let x = mix.mean - half_width + i as f64 * h;
            let u = (x - mix.mean).powi(2);
            let a: f64 = first.iter().map(|(c, e)| c * (e * u).exp()).sum();
            let b: f64 = second.iter().map(|(c, e)| c * (e * u).exp()).sum();
            let w = if i == 0 || i == cells { 0.5 * h } else { h };
            let p = (a + b) / n as f64;
            let q = gauss((x - mean).powi(2), var);
            (
                w * (p - q).abs(),
                w * (a / first.len() as f64 - b / second.len() as f64).abs(),
            )
        })
        .collect();
    let inside: f64 = rows.iter().map(|r| r.0).sum();
    let halves: f64 = rows.iter().map(|r| r.1).sum();
    let out_p = mix.mass_outside(half_width);
    let out_q = erfc(half_width / (2.0 * var).sqrt());
    let floor = halves / std::f64::consts::SQRT_2;
    Ok(DistanceReport {
        estimator: "gaussian-mixture".into(),
        value: (inside + (out_p - out_q).abs()).min(2.0),
        error_bound: floor + out_p.min(out_q) * 2.0,
        n,
        params: json!({ "half_width": half_width, "cells": cells, "mean": mean, "var": var }),
    })
}

/// Log–log regression result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    /// `(abscissa, value)` pairs echoed for audit; the abscissa is
    /// `epsilon = 2 - alpha` for [`rate_fit`].
    pub points: Vec<(f64, f64)>,
    pub slope: f64,
    pub intercept: f64,
    pub max_residual: f64,
    /// Quadratic coefficient of `log value` in `log epsilon`.
    pub curvature: f64,
    /// Set when the quadratic term is visible above the linear fit, the
    /// signature of a logarithmic correction to a pure power law.
    pub log_factor: bool,
}

/// Least squares `log value = slope log(2 - alpha) + intercept` over `(alpha, value)` points.
pub fn rate_fit(points: &[(f64, f64)]) -> Result<RateFit> {
    if let Some(&(a, _)) = points.iter().find(|p| !(p.0 < 2.0)) {
        return Err(LabError::Invalid(format!("alpha = {a} must be < 2")));
    }
    loglog_fit(&points.iter().map(|&(a, v)| (2.0 - a, v)).collect::<Vec<_>>())
}

/// Least squares `log value = slope log x + intercept` over `(x, value)` points.
pub fn loglog_fit(points: &[(f64, f64)]) -> Result<RateFit> {
    if points.len() < 3 {
        return Err(LabError::Invalid(format!(
            "rate fit needs >= 3 points, got {}",
            points.len()
        )));
    }
    for &(x, v) in points {
        if !(v > 0.0) || !(x > 0.0) {
            return Err(LabError::Invalid(format!("non-positive point ({x}, {v})")));
        }
    }
    let eps = points.to_vec();
    let xs: Vec<f64> = eps.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = eps.iter().map(|p| p.1.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx <= 1e-24 {
        return Err(LabError::Invalid("degenerate abscissae".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let max_residual = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - slope * x - intercept).abs())
        .fold(0.0, f64::max);
    let curvature = quadratic_coefficient(&xs, &ys, mx);
    let span = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - xs.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(RateFit {
        points: eps,
        slope,
        intercept,
        max_residual,
        curvature,
        log_factor: curvature.abs() * span * span / 8.0 > 1e-6,
    })
}

fn quadratic_coefficient(xs: &[f64], ys: &[f64], mx: f64) -> f64 {
    // least squares on centred abscissa: y = c0 + c1 u + c2 u^2
    let n = xs.len() as f64;
    let u: Vec<f64> = xs.iter().map(|x| x - mx).collect();
    let s = |p: i32| u.iter().map(|v| v.powi(p)).sum::<f64>();
    let t = |p: i32| u.iter().zip(ys).map(|(v, y)| v.powi(p) * y).sum::<f64>();
    let m = nalgebra::Matrix3::new(n, s(1), s(2), s(1), s(2), s(3), s(2), s(3), s(4));
    let r = nalgebra::Vector3::new(t(0), t(1), t(2));
    m.lu().solve(&r).map(|c| c[2]).unwrap_or(0.0)
}

/// Kolmogorov–Smirnov statistic of `samples` against a continuous CDF.
pub fn ks_one_sample(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let s = sorted(samples);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Two-sample Kolmogorov–Smirnov statistic.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let sa = sorted(a);
    let sb = sorted(b);
    let (na, nb) = (sa.len() as f64, sb.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < sa.len() && j < sb.len() {
        let x = sa[i].min(sb[j]);
        while i < sa.len() && sa[i] <= x {
            i += 1;
        }
        while j < sb.len() && sb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic KS critical value `sqrt(-ln(level/2)/2) * sqrt((n+m)/(n m))`; `m = None` for one sample.
pub fn ks_critical(level: f64, n: usize, m: Option<usize>) -> f64 {
    let c = (-(level / 2.0).ln() / 2.0).sqrt();
    match m {
        None => c / (n as f64).sqrt(),
        Some(m) => c * ((n + m) as f64 / (n as f64 * m as f64)).sqrt(),
    }
}
