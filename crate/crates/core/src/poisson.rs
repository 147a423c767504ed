//! The Poisson equation `A f = h - mu(h)` for the generators
//!
//! ```text
//! A^Q f = b f' + f''/2
//! A^P f = b f' + int [f(x+z) - f(x) - f'(x) z 1{|z|<1}] A(1, alpha) |z|^{-1-alpha} dz
//! ```
//!
//! in one dimension, with the half-speed normalization (the nonlocal part has
//! symbol `-|xi|^alpha / 2`, the local one `-xi^2 / 2`).
//!
//! The fractional Laplacian is evaluated in symmetric form,
//! `A int_0^inf [f(x+z) + f(x-z) - 2 f(x)] z^{-1-alpha} dz`: a Taylor closure
//! `f''(x) z^2` on `z < 2h`, product integration of the smooth quotient
//! `D(z) / z^2` against `z^{1-alpha}` on the lattice, and a closed-form or
//! truncated far field from the declared extension of `f` beyond the grid.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::a_const;
use crate::error::{domain, LabError, Result};
use crate::grid::GridSpec;
use crate::ou::semigroup_cos;
use crate::quad::GaussRule;
use crate::rng::RngStream;
use crate::sde::{mc_estimate, mc_semigroup, simulate_path, DriftField, Driver, EulerConfig, McEstimate, Scheme};

/// Behaviour of a [`GridFunction`] outside its grid.
#[derive(Clone)]
pub enum Extension {
    Constant {
        left: f64,
        right: f64,
    },
    /// `f(y) = a + b y` beyond each edge, as `(a, b)`.
    Linear {
        left: (f64, f64),
        right: (f64, f64),
    },
    /// Exact values from a closure. The far field of the fractional Laplacian
    /// is then integrated on the lattice up to `cutoff` and truncated.
    Analytic {
        f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        cutoff: f64,
    },
}

impl std::fmt::Debug for Extension {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Extension::Constant { left, right } => write!(f, "Constant({left}, {right})"),
            Extension::Linear { left, right } => write!(f, "Linear({left:?}, {right:?})"),
            Extension::Analytic { cutoff, .. } => write!(f, "Analytic(cutoff = {cutoff})"),
        }
    }
}

/// Default truncation distance for analytic extensions.
pub const ANALYTIC_CUTOFF: f64 = 200.0;

#[derive(Debug, Clone)]
pub struct GridFunction {
    pub grid: GridSpec,
    pub values: Vec<f64>,
    pub extension: Extension,
}

impl GridFunction {
    pub fn new(grid: GridSpec, values: Vec<f64>, extension: Extension) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(LabError::GridMismatch(format!(
                "{} values on {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(LabError::Invalid(format!("non-finite grid value {v}")));
        }
        Ok(Self {
            grid,
            values,
            extension,
        })
    }

    /// Tabulates `f` and uses it as the extension.
    pub fn analytic(grid: GridSpec, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Result<Self> {
        let values = grid.nodes().into_iter().map(&f).collect();
        Self::new(
            grid,
            values,
            Extension::Analytic {
                f: Arc::new(f),
                cutoff: ANALYTIC_CUTOFF,
            },
        )
    }

    pub fn constant_extended(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        let (left, right) = (values[0], values[values.len() - 1]);
        Self::new(grid, values, Extension::Constant { left, right })
    }

    /// Linear extension fitted by least squares on the outer 10% of each side.
    pub fn linear_extended(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(LabError::GridMismatch(format!(
                "{} values on {} nodes",
                values.len(),
                grid.len()
            )));
        }
        let m = (grid.len() / 10).max(2);
        let fit = |idx: &mut dyn Iterator<Item = usize>| -> (f64, f64) {
            let pts: Vec<(f64, f64)> = idx.map(|i| (grid.x(i), values[i])).collect();
            let n = pts.len() as f64;
            let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
            let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
            let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
            let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
            let b = sxy / sxx;
            (my - b * mx, b)
        };
        let left = fit(&mut (0..m));
        let right = fit(&mut (grid.len() - m..grid.len()));
        Self::new(grid, values, Extension::Linear { left, right })
    }

    /// Value at node offset `i`, which may lie outside the grid.
    #[inline]
    pub fn at(&self, i: isize) -> f64 {
        let n = self.grid.n_cells as isize;
        if (0..=n).contains(&i) {
            return self.values[i as usize];
        }
        let y = self.grid.x_min + i as f64 * self.grid.step();
        match &self.extension {
            Extension::Constant { left, right } => {
                if i < 0 {
                    *left
                } else {
                    *right
                }
            }
            Extension::Linear { left, right } => {
                let (a, b) = if i < 0 { *left } else { *right };
                a + b * y
            }
            Extension::Analytic { f, .. } => f(y),
        }
    }

    fn check_stencil(&self, i: usize) -> Result<()> {
        if i < 2 || i + 2 > self.grid.n_cells {
            return Err(LabError::Stencil { x: self.grid.x(i) });
        }
        Ok(())
    }

    /// Fourth-order centred first derivative at node `i`.
    pub fn d1(&self, i: usize) -> Result<f64> {
        self.check_stencil(i)?;
        let i = i as isize;
        let h = self.grid.step();
        Ok((-self.at(i + 2) + 8.0 * self.at(i + 1) - 8.0 * self.at(i - 1) + self.at(i - 2)) / (12.0 * h))
    }

    /// Fourth-order centred second derivative at node `i`.
    pub fn d2(&self, i: usize) -> Result<f64> {
        self.check_stencil(i)?;
        let i = i as isize;
        let h = self.grid.step();
        Ok(
            (-self.at(i + 2) + 16.0 * self.at(i + 1) - 30.0 * self.at(i) + 16.0 * self.at(i - 1) - self.at(i - 2))
                / (12.0 * h * h),
        )
    }
}

/// Lattice weights of the fractional Laplacian for one `(alpha, h)`.
#[derive(Debug, Clone)]
pub struct FracLaplacian {
    alpha: f64,
    kernel: f64,
    h: f64,
    /// `weights[j]` multiplies `D(j h) / (j h)^2`, `j >= 2`.
    weights: Vec<f64>,
}

impl FracLaplacian {
    /// Operator able to reach lattice offset `max_offset`.
    pub fn new(alpha: f64, h: f64, max_offset: usize) -> Result<Self> {
        if !(alpha > 1.0 && alpha < 2.0) {
            return Err(domain("alpha", alpha, "(1, 2)"));
        }
        let p = 1.0 - alpha;
        let rule = GaussRule::new(4);
        let mut weights = vec![0.0; max_offset + 2];
        for j in 2..max_offset.max(2) {
            let (zj, zk) = (j as f64 * h, (j + 1) as f64 * h);
            // left: int (z_{j+1} - z) z^p dz, right: int (z - z_j) z^p dz over the cell
            let (left, right) = if j < 32 {
                let m0 = (zk.powf(p + 1.0) - zj.powf(p + 1.0)) / (p + 1.0);
                let m1 = (zk.powf(p + 2.0) - zj.powf(p + 2.0)) / (p + 2.0);
                (zk * m0 - m1, m1 - zj * m0)
            } else {
                (
                    rule.integrate(|z| (zk - z) * z.powf(p), zj, zk),
                    rule.integrate(|z| (z - zj) * z.powf(p), zj, zk),
                )
            };
            weights[j] += left / h;
            weights[j + 1] += right / h;
        }
        Ok(Self {
            alpha,
            kernel: a_const(1, alpha)?,
            h,
            weights,
        })
    }

    /// Operator sized for every node of `f`.
    pub fn for_function(alpha: f64, f: &GridFunction) -> Result<Self> {
        let h = f.grid.step();
        let mut reach = f.grid.n_cells;
        if let Extension::Analytic { cutoff, .. } = &f.extension {
            reach = reach.max((cutoff / h).ceil() as usize);
        }
        Self::new(alpha, h, reach)
    }

    /// `-(-Delta)^{alpha/2} f` at node `i`.
    pub fn apply(&self, f: &GridFunction, i: usize) -> Result<f64> {
        if (f.grid.step() - self.h).abs() > 1e-12 * self.h {
            return Err(LabError::GridMismatch("operator built for another step".into()));
        }
        let a = self.alpha;
        let h = self.h;
        let fxx = f.d2(i)?;
        let n = f.grid.n_cells;
        let mut reach = i.max(n - i);
        if let Extension::Analytic { cutoff, .. } = &f.extension {
            reach = reach.max((cutoff / h).ceil() as usize);
        }
        if reach + 1 >= self.weights.len() {
            return Err(LabError::Invalid(format!(
                "operator reaches offset {} but {} is needed",
                self.weights.len() - 2,
                reach
            )));
        }
        let delta = 2.0 * h;
        let inner = fxx * delta.powf(2.0 - a) / (2.0 - a);

        let fx = f.values[i];
        let ii = i as isize;
        let mut mid = 0.0;
        for j in 2..=reach {
            let z = j as f64 * h;
            let d = f.at(ii + j as isize) + f.at(ii - j as isize) - 2.0 * fx;
            mid += self.weights[j] * d / (z * z);
        }
        // the lattice weights of the last node only carry its left cell
        let z_far = reach as f64 * h;
        let x = f.grid.x(i);
        let far = match &f.extension {
            Extension::Constant { left, right } => (left + right - 2.0 * fx) * z_far.powf(-a) / a,
            Extension::Linear { left, right } => {
                let c0 = right.0 + left.0 + (right.1 + left.1) * x - 2.0 * fx;
                let c1 = right.1 - left.1;
                c0 * z_far.powf(-a) / a + c1 * z_far.powf(1.0 - a) / (a - 1.0)
            }
            Extension::Analytic { .. } => -2.0 * fx * z_far.powf(-a) / a,
        };
        Ok(self.kernel * (inner + mid + far))
    }
}

/// `-(-Delta)^{alpha/2} f` at node `i` of `f`.
pub fn frac_laplacian_1d(f: &GridFunction, alpha: f64, i: usize) -> Result<f64> {
    FracLaplacian::for_function(alpha, f)?.apply(f, i)
}

fn check_1d(drift: &DriftField) -> Result<()> {
    if drift.d != 1 {
        return Err(LabError::Dimension {
            expected: 1,
            got: drift.d,
        });
    }
    Ok(())
}

/// `A^Q f = b f' + f''/2` at node `i`.
pub fn generator_q(f: &GridFunction, drift: &DriftField, i: usize) -> Result<f64> {
    check_1d(drift)?;
    let b = drift.eval_vec(&[f.grid.x(i)])[0];
    Ok(b * f.d1(i)? + 0.5 * f.d2(i)?)
}

/// `A^P f = b f' - (-Delta)^{alpha/2} f` at node `i`.
pub fn generator_p(f: &GridFunction, drift: &DriftField, alpha: f64, i: usize) -> Result<f64> {
    generator_p_with(&FracLaplacian::for_function(alpha, f)?, f, drift, i)
}

pub fn generator_p_with(op: &FracLaplacian, f: &GridFunction, drift: &DriftField, i: usize) -> Result<f64> {
    check_1d(drift)?;
    let b = drift.eval_vec(&[f.grid.x(i)])[0];
    Ok(b * f.d1(i)? + op.apply(f, i)?)
}

/// Bounded test functions `h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Observable {
    Cos,
    /// Indicator of `[lo, hi]`; a missing end is unbounded.
    Indicator {
        lo: Option<f64>,
        hi: Option<f64>,
    },
    Constant {
        c: f64,
    },
    /// Piecewise-linear through `(xs, ys)`, constant beyond the ends.
    Tabulated {
        xs: Vec<f64>,
        ys: Vec<f64>,
    },
}

impl Observable {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Observable::Cos => x.cos(),
            Observable::Indicator { lo, hi } => {
                let above = lo.is_none_or(|l| x >= l);
                let below = hi.is_none_or(|u| x <= u);
                if above && below {
                    1.0
                } else {
                    0.0
                }
            }
            Observable::Constant { c } => *c,
            Observable::Tabulated { xs, ys } => {
                let k = xs.partition_point(|&v| v <= x);
                if k == 0 {
                    ys[0]
                } else if k == xs.len() {
                    ys[ys.len() - 1]
                } else {
                    let w = (x - xs[k - 1]) / (xs[k] - xs[k - 1]);
                    ys[k - 1] + w * (ys[k] - ys[k - 1])
                }
            }
        }
    }

    /// `sup |h|`.
    pub fn bound(&self) -> f64 {
        match self {
            Observable::Cos | Observable::Indicator { .. } => 1.0,
            Observable::Constant { c } => c.abs(),
            Observable::Tabulated { ys, .. } => ys.iter().fold(0.0, |m, v| m.max(v.abs())),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Observable::Tabulated { xs, ys } = self {
            if xs.is_empty() || xs.len() != ys.len() || xs.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(LabError::Invalid(
                    "tabulated h needs increasing xs and matching ys".into(),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PoissonProblem {
    pub h: Observable,
    pub alpha: f64,
    pub drift: DriftField,
    /// `mu_alpha(h)`; `None` uses the closed form for the OU drift and `cos`,
    /// or a Monte Carlo estimate otherwise.
    pub mu_h: Option<f64>,
}

impl PoissonProblem {
    pub fn new(h: Observable, alpha: f64, drift: DriftField, mu_h: Option<f64>) -> Result<Self> {
        if !(alpha > 1.0 && alpha <= 2.0) {
            return Err(domain("alpha", alpha, "(1, 2]"));
        }
        check_1d(&drift)?;
        h.validate()?;
        Ok(Self { h, alpha, drift, mu_h })
    }

    fn is_ou(&self) -> bool {
        self.drift.name == "ou"
    }

    fn driver(&self) -> Driver {
        if self.alpha == 2.0 {
            Driver::Brownian
        } else {
            Driver::Stable { alpha: self.alpha }
        }
    }

    /// Closed-form `mu_alpha(h)` where one exists.
    pub fn exact_mu(&self) -> Option<f64> {
        match (&self.h, self.is_ou()) {
            (Observable::Constant { c }, _) => Some(*c),
            (Observable::Cos, true) => Some((-1.0 / (2.0 * self.alpha)).exp()),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Engine {
    ClosedFormOu,
    Mc { n: usize, dt: f64, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoissonOptions {
    /// Fixed horizon; `None` integrates until the integrand stays below `tol`.
    pub t_max: Option<f64>,
    /// Trapezoid intervals on `[0, t_max]` for the Monte Carlo engine.
    pub quad_steps: usize,
    pub tol: f64,
    /// Largest horizon the adaptive rule may reach.
    pub t_cap: f64,
}

impl Default for PoissonOptions {
    fn default() -> Self {
        Self {
            t_max: None,
            quad_steps: 400,
            tol: 1e-10,
            t_cap: 200.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoissonValue {
    pub value: f64,
    /// Quadrature plus Monte Carlo error estimate.
    pub error: f64,
    pub t_max: f64,
}

/// Monte Carlo `mu(h)` from an ensemble started at 0 and run to `t_burn`.
#[allow(clippy::too_many_arguments)]
pub fn mu_h_estimate(
    h: &Observable,
    drift: &DriftField,
    cfg: &EulerConfig,
    driver: Driver,
    t_burn: f64,
    n: usize,
    rng: &RngStream,
) -> Result<McEstimate> {
    let x0 = vec![0.0; drift.d];
    mc_semigroup(
        &|x: &[f64]| h.eval(x[0]),
        h.bound(),
        drift,
        cfg,
        driver,
        &x0,
        t_burn,
        n,
        rng,
    )
}

/// `int_0^inf [P_t h(x) - mu(h)] dt`. This is minus the solution of `A f = h - mu(h)`.
pub fn semigroup_integral(
    prob: &PoissonProblem,
    x: f64,
    opts: &PoissonOptions,
    engine: Engine,
) -> Result<PoissonValue> {
    if let Observable::Constant { .. } = prob.h {
        return Ok(PoissonValue {
            value: 0.0,
            error: 0.0,
            t_max: 0.0,
        });
    }
    match engine {
        Engine::ClosedFormOu => closed_form_integral(prob, x, opts),
        Engine::Mc { n, dt, seed } => mc_integral(prob, x, opts, n, dt, seed),
    }
}

/// Solution of `A f = h - mu(h)` at `x`, i.e. `f(x) = -int_0^inf [P_t h(x) - mu(h)] dt`.
pub fn poisson_solution(prob: &PoissonProblem, x: f64, opts: &PoissonOptions, engine: Engine) -> Result<PoissonValue> {
    let v = semigroup_integral(prob, x, opts, engine)?;
    Ok(PoissonValue { value: -v.value, ..v })
}

fn closed_form_integral(prob: &PoissonProblem, x: f64, opts: &PoissonOptions) -> Result<PoissonValue> {
    if !(prob.is_ou() && prob.h == Observable::Cos) {
        return Err(LabError::Invalid(
            "closed-form engine needs the OU drift and h = cos".into(),
        ));
    }
    let a = prob.alpha;
    let mu = prob.mu_h.unwrap_or((-1.0 / (2.0 * a)).exp());
    let g = |t: f64| semigroup_cos(a, x, t).map(|v| v - mu);
    let fine = GaussRule::new(10);
    let coarse = GaussRule::new(6);
    let (mut t, mut total, mut err, mut quiet) = (0.0f64, 0.0, 0.0, 0usize);
    loop {
        let w = (0.5 * t.exp() / (1.0 + x.abs())).min(0.25);
        let (lo, hi) = match opts.t_max {
            Some(tm) => (t, (t + w).min(tm)),
            None => (t, t + w),
        };
        let ff = fine.integrate(|s| g(s).unwrap_or(f64::NAN), lo, hi);
        let fc = coarse.integrate(|s| g(s).unwrap_or(f64::NAN), lo, hi);
        total += ff;
        err += (ff - fc).abs();
        t = hi;
        let end = g(t)?.abs();
        match opts.t_max {
            Some(tm) if t >= tm => {
                if end > opts.tol {
                    return Err(LabError::TailTolerance { t_max: tm, value: end });
                }
                break;
            }
            Some(_) => {}
            None => {
                quiet = if end < opts.tol { quiet + 1 } else { 0 };
                if quiet >= 3 {
                    break;
                }
                if t > opts.t_cap {
                    return Err(LabError::TailTolerance { t_max: t, value: end });
                }
            }
        }
    }
    // exponential decay at rate >= 1 bounds the remainder by the last integrand value
    let tail = g(t)?.abs();
    Ok(PoissonValue {
        value: total,
        error: err + tail,
        t_max: t,
    })
}

fn mc_integral(
    prob: &PoissonProblem,
    x: f64,
    opts: &PoissonOptions,
    n: usize,
    dt: f64,
    seed: u64,
) -> Result<PoissonValue> {
    let t_max = opts
        .t_max
        .ok_or_else(|| LabError::Invalid("Monte Carlo engine needs t_max".into()))?;
    if opts.quad_steps < 2 {
        return Err(LabError::Invalid("quad_steps must be >= 2".into()));
    }
    let driver = prob.driver();
    let scheme = if prob.alpha == 2.0 {
        Scheme::Brownian
    } else {
        Scheme::Subordinated
    };
    let cfg = EulerConfig::new(dt, scheme)?;
    let root = RngStream::new(seed, 0);
    let (mu, mu_err) = match prob.mu_h.or(prob.exact_mu()) {
        Some(m) => (m, 0.0),
        None => {
            let est = mu_h_estimate(&prob.h, &prob.drift, &cfg, driver, t_max, n, &root.fork(u64::MAX))?;
            (est.estimate, est.std_error)
        }
    };
    let k = opts.quad_steps;
    let step = t_max / k as f64;
    let times: Vec<f64> = (1..=k).map(|j| j as f64 * step).collect();
    let h0 = prob.h.eval(x) - mu;
    let per_path: Vec<Result<(f64, f64)>> = (0..n)
        .into_par_iter()
        .map(|p| {
            let mut rng = root.fork(p as u64);
            let mut acc = 0.5 * step * h0;
            let mut last = 0.0;
            simulate_path(&prob.drift, &cfg, driver, &[x], &times, &mut rng, |j, s| {
                let v = prob.h.eval(s[0]) - mu;
                acc += if j + 1 == k { 0.5 } else { 1.0 } * step * v;
                last = v;
            })?;
            Ok((acc, last))
        })
        .collect();
    let mut ints = Vec::with_capacity(n);
    let mut ends = Vec::with_capacity(n);
    for r in per_path {
        let (i, e) = r?;
        ints.push(i);
        ends.push(e);
    }
    let est = mc_estimate(&ints, prob.h.bound() * t_max);
    let end = mc_estimate(&ends, prob.h.bound());
    if end.estimate.abs() > opts.tol + 3.0 * end.std_error {
        return Err(LabError::TailTolerance {
            t_max,
            value: end.estimate.abs(),
        });
    }
    Ok(PoissonValue {
        value: est.estimate,
        error: 3.0 * est.std_error + t_max * mu_err + end.estimate.abs(),
        t_max,
    })
}

/// Closed-form solution on every node of `grid`, linearly extended beyond it.
pub fn poisson_grid(prob: &PoissonProblem, grid: &GridSpec, opts: &PoissonOptions) -> Result<GridFunction> {
    let values: Result<Vec<f64>> = grid
        .nodes()
        .par_iter()
        .map(|&x| poisson_solution(prob, x, opts, Engine::ClosedFormOu).map(|v| v.value))
        .collect();
    GridFunction::linear_extended(*grid, values?)
}

/// `(x, A f(x) - (h(x) - mu(h)))` at the nodes with `|x| <= x_abs_max`, using
/// `A^Q` at `alpha = 2` and `A^P` otherwise.
pub fn poisson_residuals(prob: &PoissonProblem, f: &GridFunction, x_abs_max: f64) -> Result<Vec<(f64, f64)>> {
    let mu = prob
        .mu_h
        .or(prob.exact_mu())
        .ok_or_else(|| LabError::Invalid("residual needs mu(h)".into()))?;
    let op = if prob.alpha < 2.0 {
        Some(FracLaplacian::for_function(prob.alpha, f)?)
    } else {
        None
    };
    (0..f.grid.len())
        .into_par_iter()
        .filter(|&i| f.grid.x(i).abs() <= x_abs_max)
        .map(|i| {
            let x = f.grid.x(i);
            let gen = match &op {
                Some(op) => generator_p_with(op, f, &prob.drift, i)?,
                None => generator_q(f, &prob.drift, i)?,
            };
            Ok((x, gen - (prob.h.eval(x) - mu)))
        })
        .collect()
}

/// `sup_x |f(x)| / (1 + |x|)` over the grid.
pub fn lin_norm(f: &GridFunction) -> f64 {
    f.values
        .iter()
        .enumerate()
        .map(|(i, v)| v.abs() / (1.0 + f.grid.x(i).abs()))
        .fold(0.0, f64::max)
}

/// `sup_x |f_a(x) - f_b(x)| / (1 + |x|)` over a shared grid.
pub fn lin_norm_diff(fa: &GridFunction, fb: &GridFunction) -> Result<f64> {
    if fa.grid != fb.grid {
        return Err(LabError::GridMismatch(format!("{:?} vs {:?}", fa.grid, fb.grid)));
    }
    Ok(fa
        .values
        .iter()
        .zip(&fb.values)
        .enumerate()
        .map(|(i, (a, b))| (a - b).abs() / (1.0 + fa.grid.x(i).abs()))
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> GridSpec {
        GridSpec::new(-10.0, 10.0, 2000).unwrap()
    }

    #[test]
    fn constant_is_in_the_kernel() {
        let f = GridFunction::constant_extended(grid(), vec![3.5; 2001]).unwrap();
        for alpha in [1.2, 1.5, 1.8] {
            for i in [2, 500, 1000, 1998] {
                assert!(frac_laplacian_1d(&f, alpha, i).unwrap().abs() < 1e-10);
            }
        }
        let ou = DriftField::ou(1).unwrap();
        assert!(generator_q(&f, &ou, 1000).unwrap().abs() < 1e-12);
        assert!(generator_p(&f, &ou, 1.5, 700).unwrap().abs() < 1e-10);
    }

    #[test]
    fn linear_functions_vanish() {
        let g = grid();
        let f = GridFunction::linear_extended(g, g.nodes().iter().map(|x| 2.0 - 0.5 * x).collect()).unwrap();
        for i in [2, 300, 1000, 1700, 1998] {
            assert!(frac_laplacian_1d(&f, 1.5, i).unwrap().abs() < 1e-9);
        }
    }

    #[test]
    fn stencil_violation() {
        let f = GridFunction::constant_extended(grid(), vec![1.0; 2001]).unwrap();
        assert!(matches!(frac_laplacian_1d(&f, 1.5, 1), Err(LabError::Stencil { .. })));
        assert!(matches!(
            generator_q(&f, &DriftField::ou(1).unwrap(), 1999),
            Err(LabError::Stencil { .. })
        ));
        assert!(frac_laplacian_1d(&f, 2.0, 100).is_err());
    }

    #[test]
    fn quadratic_under_ou_generator() {
        let g = grid();
        let f = GridFunction::analytic(g, |x| x * x).unwrap();
        let ou = DriftField::ou(1).unwrap();
        for i in [2, 400, 1000, 1998] {
            let x = g.x(i);
            assert!((generator_q(&f, &ou, i).unwrap() - (1.0 - 2.0 * x * x)).abs() < 1e-8);
        }
    }

    #[test]
    fn lin_norm_definition() {
        let g = grid();
        let fa = GridFunction::analytic(g, |x| x.sin()).unwrap();
        let fb = GridFunction::analytic(g, |x| x.sin() + 1.0 + x.abs()).unwrap();
        assert_eq!(lin_norm_diff(&fa, &fa).unwrap(), 0.0);
        assert!((lin_norm_diff(&fa, &fb).unwrap() - 1.0).abs() < 1e-14);
        let other = GridFunction::analytic(GridSpec::new(-1.0, 1.0, 10).unwrap(), |x| x).unwrap();
        assert!(lin_norm_diff(&fa, &other).is_err());
    }

    #[test]
    fn constant_h_gives_zero_solution() {
        let prob = PoissonProblem::new(Observable::Constant { c: 0.3 }, 1.5, DriftField::ou(1).unwrap(), None).unwrap();
        let v = poisson_solution(&prob, 1.0, &PoissonOptions::default(), Engine::ClosedFormOu).unwrap();
        assert_eq!(v.value, 0.0);
        let est = mu_h_estimate(
            &Observable::Constant { c: 1.0 },
            &prob.drift,
            &EulerConfig::new(0.05, Scheme::Subordinated).unwrap(),
            Driver::Stable { alpha: 1.5 },
            2.0,
            200,
            &RngStream::from_seed(1),
        )
        .unwrap();
        assert_eq!(est.estimate, 1.0);
    }

    #[test]
    fn observables() {
        let ind = Observable::Indicator {
            lo: None,
            hi: Some(0.0),
        };
        assert_eq!((ind.eval(-1.0), ind.eval(0.0), ind.eval(0.1)), (1.0, 1.0, 0.0));
        let tab = Observable::Tabulated {
            xs: vec![0.0, 1.0],
            ys: vec![0.0, 2.0],
        };
        assert_eq!((tab.eval(-1.0), tab.eval(0.25), tab.eval(5.0)), (0.0, 0.5, 2.0));
        assert_eq!(tab.bound(), 2.0);
        assert!(Observable::Tabulated {
            xs: vec![1.0, 0.0],
            ys: vec![0.0, 0.0]
        }
        .validate()
        .is_err());
    }

    #[test]
    fn closed_form_engine_requires_ou_cos() {
        let prob = PoissonProblem::new(
            Observable::Indicator {
                lo: None,
                hi: Some(0.0),
            },
            2.0,
            DriftField::ou(1).unwrap(),
            None,
        )
        .unwrap();
        assert!(poisson_solution(&prob, 0.0, &PoissonOptions::default(), Engine::ClosedFormOu).is_err());
    }

    #[test]
    fn fixed_horizon_too_short() {
        let prob = PoissonProblem::new(Observable::Cos, 2.0, DriftField::ou(1).unwrap(), None).unwrap();
        let opts = PoissonOptions {
            t_max: Some(1.0),
            ..Default::default()
        };
        assert!(matches!(
            poisson_solution(&prob, 0.0, &opts, Engine::ClosedFormOu),
            Err(LabError::TailTolerance { .. })
        ));
    }
}
