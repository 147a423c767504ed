//! Euler–Maruyama simulation of the Brownian and stable-driven SDEs
//! `dY = b(Y) dt + sigma dB` and `dX = b(X) dt + sigma dL`.
//!
//! Driver increments are exact in law on every step, so the only
//! discretization error sits in the drift. Each path first draws a 64-bit
//! lane key from its stream; Gaussian draws come from the stream itself and
//! jump draws (subordinator or Chambers–Mallows–Stuck) from the child stream
//! keyed by that lane. A Brownian path and a subordinated stable path run on
//! the same stream therefore share their Gaussian innovations, which is what
//! the paired estimators rely on.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distance::GaussianMixture;
use crate::error::{domain, LabError, Result};
use crate::rng::RngStream;
use crate::sampling::{
    fill_stable_vector, sample_subordinator, unit_sym_stable, Generator, SampleMeta, SampleSet, StableSpec,
    SubordinatorSpec,
};

pub type DriftFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;

/// Drift `b: R^d -> R^d` with the constants it claims to satisfy:
/// `<x-y, b(x)-b(y)> <= -theta0 |x-y|^2 + k`, `|grad_v b| <= theta1 |v|`,
/// `|grad_w grad_v b| <= theta2 |v||w|`. The claims are checked by
/// [`probe_h1`] and [`probe_h2`], never assumed.
#[derive(Clone)]
pub struct DriftField {
    pub name: String,
    pub d: usize,
    pub theta0: f64,
    pub theta1: f64,
    pub theta2: f64,
    pub k: f64,
    b: Arc<DriftFn>,
}

impl std::fmt::Debug for DriftField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DriftField")
            .field("name", &self.name)
            .field("d", &self.d)
            .field("theta0", &self.theta0)
            .field("theta1", &self.theta1)
            .field("theta2", &self.theta2)
            .field("k", &self.k)
            .finish()
    }
}

impl DriftField {
    pub fn new(
        name: impl Into<String>,
        d: usize,
        theta0: f64,
        theta1: f64,
        theta2: f64,
        k: f64,
        b: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Result<Self> {
        if d == 0 {
            return Err(domain("d", 0.0, "d >= 1"));
        }
        if !(theta0 > 0.0) {
            return Err(domain("theta0", theta0, "(0, inf)"));
        }
        for (name, v) in [("theta1", theta1), ("theta2", theta2), ("K", k)] {
            if !(v >= 0.0) {
                return Err(domain(name, v, "[0, inf)"));
            }
        }
        Ok(Self {
            name: name.into(),
            d,
            theta0,
            theta1,
            theta2,
            k,
            b: Arc::new(b),
        })
    }

    /// `b(x) = -x`: theta0 = 1, K = 0, theta1 = 1, theta2 = 0.
    pub fn ou(d: usize) -> Result<Self> {
        Self::new("ou", d, 1.0, 1.0, 0.0, 0.0, |x, out| {
            for (o, v) in out.iter_mut().zip(x) {
                *o = -v;
            }
        })
    }

    /// `b(x) = -x + eps sin(x)` componentwise, `0 <= eps < 1`.
    pub fn ou_perturbed(d: usize, eps: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&eps) {
            return Err(domain("eps", eps, "[0, 1)"));
        }
        Self::new(
            format!("ou-perturbed({eps})"),
            d,
            1.0 - eps,
            1.0 + eps,
            eps,
            0.0,
            move |x, out| {
                for (o, v) in out.iter_mut().zip(x) {
                    *o = -v + eps * v.sin();
                }
            },
        )
    }

    /// `b(x) = A x + c`. theta0 is minus the largest eigenvalue of the
    /// symmetric part of `A` and must be positive; theta1 is the spectral norm.
    pub fn affine(a: DMatrix<f64>, c: Vec<f64>) -> Result<Self> {
        let d = c.len();
        if a.nrows() != d || a.ncols() != d {
            return Err(LabError::Dimension {
                expected: d,
                got: a.nrows(),
            });
        }
        let sym = (&a + a.transpose()) * 0.5;
        let lmax = sym.symmetric_eigenvalues().max();
        let norm = a.clone().svd(false, false).singular_values.max();
        let rows: Vec<f64> = a.transpose().as_slice().to_vec();
        Self::new("custom-affine", d, -lmax, norm, 0.0, 0.0, move |x, out| {
            for i in 0..d {
                out[i] = c[i] + (0..d).map(|j| rows[i * d + j] * x[j]).sum::<f64>();
            }
        })
    }

    /// `b = 0`. Not dissipative; `theta0` is a placeholder that [`probe_h1`] will reject.
    pub fn zero(d: usize) -> Result<Self> {
        Self::new("zero", d, f64::MIN_POSITIVE, 0.0, 0.0, 0.0, |_, out| out.fill(0.0))
    }

    #[inline]
    pub fn eval(&self, x: &[f64], out: &mut [f64]) {
        (self.b)(x, out)
    }

    pub fn eval_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.d];
        self.eval(x, &mut out);
        out
    }

    /// `sqrt(2K / theta0)`, defined when `K > 0`.
    pub fn l0(&self) -> Option<f64> {
        (self.k > 0.0).then(|| (2.0 * self.k / self.theta0).sqrt())
    }
}

/// Drift registry for configs and the command line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DriftSpec {
    Ou,
    OuPerturbed { eps: f64 },
    CustomAffine { a: Vec<Vec<f64>>, c: Vec<f64> },
    Zero,
}

impl DriftSpec {
    pub fn build(&self, d: usize) -> Result<DriftField> {
        match self {
            DriftSpec::Ou => DriftField::ou(d),
            DriftSpec::OuPerturbed { eps } => DriftField::ou_perturbed(d, *eps),
            DriftSpec::Zero => DriftField::zero(d),
            DriftSpec::CustomAffine { a, c } => {
                if a.len() != c.len() || c.len() != d || a.iter().any(|r| r.len() != d) {
                    return Err(LabError::Invalid(format!(
                        "custom-affine drift must be {d}x{d} with {d} offsets"
                    )));
                }
                DriftField::affine(DMatrix::from_fn(d, d, |i, j| a[i][j]), c.clone())
            }
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "ou" {
            return Ok(DriftSpec::Ou);
        }
        if s == "zero" {
            return Ok(DriftSpec::Zero);
        }
        if let Some(arg) = s.strip_prefix("ou-perturbed(").and_then(|r| r.strip_suffix(')')) {
            let eps = arg
                .trim()
                .parse()
                .map_err(|e| LabError::Invalid(format!("bad eps `{arg}`: {e}")))?;
            return Ok(DriftSpec::OuPerturbed { eps });
        }
        Err(LabError::Invalid(format!(
            "unknown drift `{s}` (expected ou, ou-perturbed(eps), zero; custom-affine via config)"
        )))
    }
}

/// Worst (H1) margin `max [<x-y, b(x)-b(y)> + theta0 |x-y|^2 - K]`; `<= 0` means the claim holds on the pairs.
pub fn probe_h1(drift: &DriftField, pairs: &[(Vec<f64>, Vec<f64>)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(LabError::Empty("probe pairs"));
    }
    let mut worst = f64::NEG_INFINITY;
    for (x, y) in pairs {
        for v in [x, y] {
            if v.len() != drift.d {
                return Err(LabError::Dimension {
                    expected: drift.d,
                    got: v.len(),
                });
            }
        }
        let bx = drift.eval_vec(x);
        let by = drift.eval_vec(y);
        let mut inner = 0.0;
        let mut sq = 0.0;
        for i in 0..drift.d {
            let dx = x[i] - y[i];
            inner += dx * (bx[i] - by[i]);
            sq += dx * dx;
        }
        worst = worst.max(inner + drift.theta0 * sq - drift.k);
    }
    Ok(worst)
}

/// Coordinate axes followed by `extra` random unit vectors.
pub fn probe_directions(d: usize, extra: usize, rng: &mut RngStream) -> Vec<Vec<f64>> {
    let mut dirs: Vec<Vec<f64>> = (0..d)
        .map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for _ in 0..extra {
        let g: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        let n = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        dirs.push(g.into_iter().map(|v| v / n).collect());
    }
    dirs
}

/// Central finite-difference suprema `(sup |grad_v b| / |v|, sup |grad_w grad_v b| / (|v||w|))`
/// over the points and all (pairs of) directions.
pub fn probe_h2(drift: &DriftField, points: &[Vec<f64>], fd_step: f64, directions: &[Vec<f64>]) -> Result<(f64, f64)> {
    if !(fd_step > 0.0) {
        return Err(domain("fd_step", fd_step, "(0, inf)"));
    }
    if points.is_empty() || directions.is_empty() {
        return Err(LabError::Empty("probe points or directions"));
    }
    let d = drift.d;
    let h = fd_step;
    let shifted = |x: &[f64], v: &[f64], sv: f64, w: &[f64], sw: f64| -> Vec<f64> {
        let y: Vec<f64> = (0..d).map(|i| x[i] + sv * v[i] + sw * w[i]).collect();
        drift.eval_vec(&y)
    };
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let zero = vec![0.0; d];
    let (mut t1, mut t2) = (0.0f64, 0.0f64);
    for x in points {
        if x.len() != d {
            return Err(LabError::Dimension {
                expected: d,
                got: x.len(),
            });
        }
        for v in directions {
            if v.len() != d {
                return Err(LabError::Dimension {
                    expected: d,
                    got: v.len(),
                });
            }
            let p = shifted(x, v, h, &zero, 0.0);
            let m = shifted(x, v, -h, &zero, 0.0);
            let g: Vec<f64> = (0..d).map(|i| (p[i] - m[i]) / (2.0 * h)).collect();
            t1 = t1.max(norm(&g) / norm(v));
            for w in directions {
                let pp = shifted(x, v, h, w, h);
                let pm = shifted(x, v, h, w, -h);
                let mp = shifted(x, v, -h, w, h);
                let mm = shifted(x, v, -h, w, -h);
                let g2: Vec<f64> = (0..d)
                    .map(|i| (pp[i] - pm[i] - mp[i] + mm[i]) / (4.0 * h * h))
                    .collect();
                t2 = t2.max(norm(&g2) / (norm(v) * norm(w)));
            }
        }
    }
    Ok((t1, t2))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Stable increments drawn directly (Chambers–Mallows–Stuck in d = 1, sub-Gaussian otherwise).
    DirectStable,
    /// Subordinator increment, then `sqrt(dS) * G`.
    Subordinated,
    Brownian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Driver {
    Brownian,
    Stable { alpha: f64 },
}

impl Driver {
    pub fn label(&self) -> String {
        match self {
            Driver::Brownian => "brownian".into(),
            Driver::Stable { alpha } => format!("stable({alpha})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EulerConfig {
    pub dt: f64,
    pub scheme: Scheme,
    sigma: Option<DMatrix<f64>>,
}

impl EulerConfig {
    /// Identity diffusion matrix.
    pub fn new(dt: f64, scheme: Scheme) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(domain("dt", dt, "(0, inf)"));
        }
        Ok(Self {
            dt,
            scheme,
            sigma: None,
        })
    }

    pub fn with_sigma(mut self, sigma: DMatrix<f64>) -> Result<Self> {
        if !sigma.is_square() {
            return Err(LabError::Invalid("sigma must be square".into()));
        }
        let sv = sigma.clone().svd(false, false).singular_values;
        let (smax, smin) = (sv.max(), sv.min());
        if !(smin > 0.0) || !(smax / smin).is_finite() || smax / smin > 1e12 {
            return Err(LabError::Invalid(format!(
                "sigma is not invertible (condition number {})",
                smax / smin
            )));
        }
        self.sigma = Some(sigma);
        Ok(self)
    }

    pub fn sigma(&self) -> Option<&DMatrix<f64>> {
        self.sigma.as_ref()
    }

    /// `min(1e-3, t/100)`.
    pub fn default_dt(t: f64) -> f64 {
        (t / 100.0).min(1e-3)
    }

    fn check_driver(&self, driver: Driver, d: usize) -> Result<()> {
        if let Some(s) = &self.sigma {
            if s.nrows() != d {
                return Err(LabError::Dimension {
                    expected: d,
                    got: s.nrows(),
                });
            }
        }
        match (driver, self.scheme) {
            (Driver::Brownian, Scheme::Brownian) => Ok(()),
            (Driver::Stable { alpha }, Scheme::DirectStable | Scheme::Subordinated) => {
                if alpha > 1.0 && alpha < 2.0 {
                    Ok(())
                } else {
                    Err(domain("alpha", alpha, "(1, 2)"))
                }
            }
            (d, s) => Err(LabError::Invalid(format!("scheme {s:?} cannot drive {}", d.label()))),
        }
    }
}

/// Scratch buffers and driver state of one path.
struct Stepper<'a> {
    drift: &'a DriftField,
    cfg: &'a EulerConfig,
    driver: Driver,
    jumps: RngStream,
    b: Vec<f64>,
    noise: Vec<f64>,
    mixed: Vec<f64>,
}

impl<'a> Stepper<'a> {
    fn new(drift: &'a DriftField, cfg: &'a EulerConfig, driver: Driver, rng: &mut RngStream) -> Self {
        let lane = rng.next_u64();
        let d = drift.d;
        Self {
            drift,
            cfg,
            driver,
            jumps: rng.fork(lane),
            b: vec![0.0; d],
            noise: vec![0.0; d],
            mixed: vec![0.0; d],
        }
    }

    #[inline]
    fn driver_increment(&mut self, h: f64, rng: &mut RngStream) {
        match (self.driver, self.cfg.scheme) {
            (Driver::Brownian, _) => {
                let s = h.sqrt();
                for v in self.noise.iter_mut() {
                    *v = s * rng.normal();
                }
            }
            (Driver::Stable { alpha }, Scheme::Subordinated) => {
                let ds = sample_subordinator(SubordinatorSpec { alpha, time: h }, &mut self.jumps);
                let s = ds.sqrt();
                for v in self.noise.iter_mut() {
                    *v = s * rng.normal();
                }
            }
            (Driver::Stable { alpha }, _) => {
                if self.noise.len() == 1 {
                    let spec = StableSpec { alpha, time: h };
                    self.noise[0] = spec.scale() * unit_sym_stable(alpha, &mut self.jumps);
                } else {
                    // sub-Gaussian construction is the only isotropic one in d > 1
                    fill_stable_vector(alpha, h, &mut self.jumps, &mut self.noise).expect("validated driver");
                }
            }
        }
    }

    #[inline]
    fn step(&mut self, x: &mut [f64], h: f64, rng: &mut RngStream) {
        self.drift.eval(x, &mut self.b);
        self.driver_increment(h, rng);
        let noise: &[f64] = match &self.cfg.sigma {
            None => &self.noise,
            Some(s) => {
                for i in 0..x.len() {
                    self.mixed[i] = (0..x.len()).map(|j| s[(i, j)] * self.noise[j]).sum();
                }
                &self.mixed
            }
        };
        for i in 0..x.len() {
            x[i] += self.b[i] * h + noise[i];
        }
    }
}

/// Simulates one path and calls `observe(k, state)` at each of the increasing
/// `times`; steps are shortened so that every observation time is hit exactly.
pub fn simulate_path(
    drift: &DriftField,
    cfg: &EulerConfig,
    driver: Driver,
    x0: &[f64],
    times: &[f64],
    rng: &mut RngStream,
    mut observe: impl FnMut(usize, &[f64]),
) -> Result<()> {
    if x0.len() != drift.d {
        return Err(LabError::Dimension {
            expected: drift.d,
            got: x0.len(),
        });
    }
    cfg.check_driver(driver, drift.d)?;
    let mut prev = 0.0;
    for &t in times {
        if !(t > prev || (t == 0.0 && prev == 0.0)) || !t.is_finite() {
            return Err(LabError::Invalid(format!(
                "observation times must increase, got {t} after {prev}"
            )));
        }
        prev = t;
    }
    let mut stepper = Stepper::new(drift, cfg, driver, rng);
    let mut x = x0.to_vec();
    let mut now = 0.0;
    let mut step = 0usize;
    for (k, &target) in times.iter().enumerate() {
        while target - now > 1e-12 * target.max(1.0) {
            let h = cfg.dt.min(target - now);
            stepper.step(&mut x, h, rng);
            step += 1;
            if x.iter().any(|v| !v.is_finite()) {
                return Err(LabError::NonFinite { step });
            }
            now += h;
        }
        now = target;
        observe(k, &x);
    }
    Ok(())
}

fn endpoint(
    drift: &DriftField,
    cfg: &EulerConfig,
    driver: Driver,
    x0: &[f64],
    t: f64,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    if !(t > 0.0) {
        return Err(domain("t", t, "(0, inf)"));
    }
    let mut out = Vec::new();
    simulate_path(drift, cfg, driver, x0, &[t], rng, |_, x| out = x.to_vec())?;
    Ok(out)
}

/// Euler–Maruyama endpoint of the Brownian SDE at time `t`.
pub fn integrate_bm(
    drift: &DriftField,
    cfg: &EulerConfig,
    x0: &[f64],
    t: f64,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    if cfg.scheme != Scheme::Brownian {
        return Err(LabError::Invalid(format!(
            "integrate_bm needs the brownian scheme, got {:?}",
            cfg.scheme
        )));
    }
    endpoint(drift, cfg, Driver::Brownian, x0, t, rng)
}

/// Euler endpoint of the stable SDE at time `t`, `1 < alpha < 2`.
pub fn integrate_stable(
    drift: &DriftField,
    cfg: &EulerConfig,
    alpha: f64,
    x0: &[f64],
    t: f64,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    endpoint(drift, cfg, Driver::Stable { alpha }, x0, t, rng)
}

/// Euler endpoint law of `dX = -theta X dt + dL` from `x0` under the
/// subordinated scheme, conditional on the subordinator increments of each
/// path. Path `k` consumes its jump stream exactly as in [`run_ensemble`]
/// with the same `rng`, so component `k` is the conditional law of endpoint `k`.
#[allow(clippy::too_many_arguments)]
pub fn subordinated_ou_mixture(
    alpha: f64,
    theta: f64,
    x0: f64,
    t: f64,
    dt: f64,
    n: usize,
    rng: &RngStream,
) -> Result<GaussianMixture> {
    if !(alpha > 1.0 && alpha < 2.0) {
        return Err(domain("alpha", alpha, "(1, 2)"));
    }
    if n == 0 {
        return Err(LabError::Empty("ensemble size"));
    }
    if !(t > 0.0) || !(dt > 0.0) || !(theta * dt < 1.0) {
        return Err(LabError::Invalid(format!(
            "need t > 0 and 0 < theta dt < 1, got t = {t}, dt = {dt}"
        )));
    }
    let steps = euler_steps(t, dt);
    let mean = steps.iter().fold(x0, |m, h| m * (1.0 - theta * h));
    let variances = (0..n)
        .into_par_iter()
        .map(|k| {
            let mut path = rng.fork(k as u64);
            let lane = path.next_u64();
            let mut jumps = path.fork(lane);
            steps.iter().fold(0.0, |v, &h| {
                let ds = sample_subordinator(SubordinatorSpec { alpha, time: h }, &mut jumps);
                (1.0 - theta * h).powi(2) * v + ds
            })
        })
        .collect();
    GaussianMixture::new(mean, variances)
}

/// Variance of the Euler endpoint of `dX = -theta X dt + dW` at time `t`.
pub fn brownian_ou_variance(theta: f64, t: f64, dt: f64) -> f64 {
    euler_steps(t, dt)
        .iter()
        .fold(0.0, |v, &h| (1.0 - theta * h).powi(2) * v + h)
}

/// Step lengths used by [`simulate_path`] to reach `t`.
fn euler_steps(t: f64, dt: f64) -> Vec<f64> {
    let mut steps = Vec::with_capacity((t / dt).ceil() as usize + 1);
    let mut now = 0.0;
    while t - now > 1e-12 * t.max(1.0) {
        let h = dt.min(t - now);
        steps.push(h);
        now += h;
    }
    steps
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub drift: String,
    pub driver: Driver,
    pub scheme: Scheme,
    pub dt: f64,
    pub t: f64,
    pub x0: Vec<f64>,
    pub seed: u64,
    pub stream: u64,
}

/// `n x d` endpoint matrix (row-major) with the data needed to regenerate it.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub endpoints: Vec<f64>,
    pub n: usize,
    pub d: usize,
    pub provenance: Provenance,
}

impl Ensemble {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.endpoints[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.endpoints.chunks_exact(self.d)
    }

    /// All endpoints as a `d`-dimensional sample set.
    pub fn samples(&self) -> SampleSet {
        let p = &self.provenance;
        let alpha = match p.driver {
            Driver::Brownian => 2.0,
            Driver::Stable { alpha } => alpha,
        };
        SampleSet::new(
            self.endpoints.clone(),
            SampleMeta {
                generator: Generator::External(format!("{} endpoints, drift {}", p.driver.label(), p.drift)),
                alpha,
                t: p.t,
                d: self.d,
                seed: p.seed,
                stream: p.stream,
                n: self.n,
            },
        )
        .expect("ensembles are non-empty")
    }

    /// Coordinate `j` of every endpoint.
    pub fn component(&self, j: usize) -> SampleSet {
        let values: Vec<f64> = self.rows().map(|r| r[j]).collect();
        let mut meta = self.samples().meta().clone();
        meta.d = 1;
        SampleSet::new(values, meta).expect("ensembles are non-empty")
    }

    /// Writes `<stem>.csv` (one row per endpoint) and `<stem>.json` (provenance).
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_path(dir.join(format!("{stem}.csv")))?;
        w.write_record((1..=self.d).map(|i| format!("x{i}")))?;
        for r in self.rows() {
            w.write_record(r.iter().map(|v| format!("{v:e}")))?;
        }
        w.flush()?;
        let mut side = BufWriter::new(File::create(dir.join(format!("{stem}.json")))?);
        serde_json::to_writer_pretty(
            &mut side,
            &serde_json::json!({ "n": self.n, "d": self.d, "provenance": self.provenance }),
        )?;
        side.flush()?;
        Ok(())
    }
}

/// Runs `f` on a dedicated pool of `workers` threads, or on the global pool.
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w.max(1))
                .build()
                .map_err(|e| LabError::Invalid(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

fn ensemble_error(total: usize, failures: Vec<(usize, LabError)>) -> LabError {
    let failed = failures.len();
    let (path, source) = failures.into_iter().min_by_key(|(p, _)| *p).expect("non-empty");
    LabError::Ensemble {
        failed,
        total,
        path,
        source: Box::new(source),
    }
}

/// Runs `n` independent paths; path `k` uses `rng.fork(k)`, so the result is
/// independent of the number of workers.
#[allow(clippy::too_many_arguments)]
pub fn run_ensemble(
    drift: &DriftField,
    cfg: &EulerConfig,
    driver: Driver,
    x0: &[f64],
    t: f64,
    n: usize,
    rng: &RngStream,
    workers: Option<usize>,
) -> Result<Ensemble> {
    if n == 0 {
        return Err(LabError::Empty("ensemble size"));
    }
    if !(t > 0.0) {
        return Err(domain("t", t, "(0, inf)"));
    }
    cfg.check_driver(driver, drift.d)?;
    let d = drift.d;
    let mut endpoints = vec![0.0; n * d];
    let failures: Vec<(usize, LabError)> = with_workers(workers, || {
        endpoints
            .par_chunks_mut(d)
            .enumerate()
            .filter_map(|(k, out)| {
                let mut path_rng = rng.fork(k as u64);
                simulate_path(drift, cfg, driver, x0, &[t], &mut path_rng, |_, x| {
                    out.copy_from_slice(x)
                })
                .err()
                .map(|e| (k, e))
            })
            .collect()
    })?;
    if !failures.is_empty() {
        return Err(ensemble_error(n, failures));
    }
    Ok(Ensemble {
        endpoints,
        n,
        d,
        provenance: Provenance {
            drift: drift.name.clone(),
            driver,
            scheme: cfg.scheme,
            dt: cfg.dt,
            t,
            x0: x0.to_vec(),
            seed: rng.root_seed(),
            stream: rng.stream_index(),
        },
    })
}

/// Monte Carlo estimate of `E h(X_t^x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    /// Sample standard deviation over `sqrt(n)`.
    pub std_error: f64,
    /// `sup |h| / sqrt(n)`, from the caller-declared bound.
    pub bound_error: f64,
    pub n: usize,
}

pub(crate) fn mc_estimate(values: &[f64], bound: f64) -> McEstimate {
    let (m, v) = crate::distance::mean_var(values);
    let n = values.len();
    McEstimate {
        estimate: m,
        std_error: (v / n as f64).sqrt(),
        bound_error: bound / (n as f64).sqrt(),
        n,
    }
}

/// `P_t h(x)` (or `Q_t h(x)` for the Brownian driver) by Monte Carlo.
#[allow(clippy::too_many_arguments)]
pub fn mc_semigroup(
    h: &(dyn Fn(&[f64]) -> f64 + Sync),
    h_bound: f64,
    drift: &DriftField,
    cfg: &EulerConfig,
    driver: Driver,
    x: &[f64],
    t: f64,
    n: usize,
    rng: &RngStream,
) -> Result<McEstimate> {
    Ok(mc_semigroup_curve(h, h_bound, drift, cfg, driver, x, &[t], n, rng)?.remove(0))
}

/// `P_t h(x)` at every time in `times`, all estimated from one set of paths
/// (common random numbers across `t`).
#[allow(clippy::too_many_arguments)]
pub fn mc_semigroup_curve(
    h: &(dyn Fn(&[f64]) -> f64 + Sync),
    h_bound: f64,
    drift: &DriftField,
    cfg: &EulerConfig,
    driver: Driver,
    x: &[f64],
    times: &[f64],
    n: usize,
    rng: &RngStream,
) -> Result<Vec<McEstimate>> {
    if n == 0 {
        return Err(LabError::Empty("ensemble size"));
    }
    if times.is_empty() {
        return Err(LabError::Empty("time grid"));
    }
    let m = times.len();
    let mut table = vec![0.0; n * m];
    let failures: Vec<(usize, LabError)> = table
        .par_chunks_mut(m)
        .enumerate()
        .filter_map(|(k, row)| {
            let mut path_rng = rng.fork(k as u64);
            simulate_path(drift, cfg, driver, x, times, &mut path_rng, |j, state| {
                row[j] = h(state)
            })
            .err()
            .map(|e| (k, e))
        })
        .collect();
    if !failures.is_empty() {
        return Err(ensemble_error(n, failures));
    }
    Ok((0..m)
        .map(|j| {
            let col: Vec<f64> = (0..n).map(|k| table[k * m + j]).collect();
            mc_estimate(&col, h_bound)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn h1_equality_and_violation() {
        let ou = DriftField::ou(1).unwrap();
        let pairs = vec![(vec![1.0], vec![0.0]), (vec![-3.0], vec![2.5])];
        assert_eq!(probe_h1(&ou, &pairs).unwrap(), 0.0);
        let strict = DriftField::new("ou", 1, 2.0, 1.0, 0.0, 0.0, |x, o| o[0] = -x[0]).unwrap();
        assert_eq!(probe_h1(&strict, &[(vec![1.0], vec![0.0])]).unwrap(), 1.0);
        assert!(probe_h1(&ou, &[]).is_err());
        assert!(probe_h1(&ou, &[(vec![1.0, 2.0], vec![0.0, 0.0])]).is_err());
    }

    #[test]
    fn zero_drift_fails_h1() {
        let z = DriftField::zero(2).unwrap();
        assert!(probe_h1(&z, &[(vec![10.0, 0.0], vec![-10.0, 0.0])]).unwrap() > 0.0);
    }

    #[test]
    fn h2_on_linear_drifts() {
        let mut rng = RngStream::from_seed(3);
        let dirs = probe_directions(3, 5, &mut rng);
        let pts = vec![vec![0.3, -2.0, 5.0], vec![-7.0, 1.0, 0.0]];
        let (t1, t2) = probe_h2(&DriftField::ou(3).unwrap(), &pts, 1e-3, &dirs).unwrap();
        assert!((t1 - 1.0).abs() < 1e-6 && t2 < 1e-6, "{t1} {t2}");
        let (z1, z2) = probe_h2(&DriftField::zero(3).unwrap(), &pts, 1e-3, &dirs).unwrap();
        assert_eq!((z1, z2), (0.0, 0.0));
    }

    #[test]
    fn affine_constants() {
        let a = DMatrix::from_row_slice(2, 2, &[-2.0, 1.0, -1.0, -3.0]);
        let b = DriftField::affine(a, vec![1.0, 0.5]).unwrap();
        // symmetric part diag(-2, -3)
        assert!((b.theta0 - 2.0).abs() < 1e-12);
        assert_eq!(b.eval_vec(&[1.0, 1.0]), vec![0.0, -3.5]);
        let bad = DMatrix::from_row_slice(1, 1, &[1.0]);
        assert!(DriftField::affine(bad, vec![0.0]).is_err());
    }

    #[test]
    fn drift_registry() {
        assert_eq!(DriftSpec::parse("ou").unwrap(), DriftSpec::Ou);
        assert_eq!(
            DriftSpec::parse("ou-perturbed(0.1)").unwrap(),
            DriftSpec::OuPerturbed { eps: 0.1 }
        );
        assert!(DriftSpec::parse("nope").is_err());
        let f = DriftSpec::OuPerturbed { eps: 0.1 }.build(2).unwrap();
        assert!((f.theta1 - 1.1).abs() < 1e-15);
        let spec: DriftSpec = toml::from_str("kind = \"custom-affine\"\na = [[-1.0]]\nc = [0.5]").unwrap();
        assert_eq!(spec.build(1).unwrap().eval_vec(&[1.0]), vec![-0.5]);
    }

    #[test]
    fn l0_defined_only_with_k() {
        assert_eq!(DriftField::ou(1).unwrap().l0(), None);
        let f = DriftField::new("k", 1, 2.0, 0.0, 0.0, 4.0, |_, o| o[0] = 0.0).unwrap();
        assert_eq!(f.l0(), Some(2.0));
    }

    #[test]
    fn sigma_validation() {
        let cfg = EulerConfig::new(0.01, Scheme::Brownian).unwrap();
        assert!(cfg
            .clone()
            .with_sigma(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]))
            .is_err());
        assert!(cfg
            .with_sigma(DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 2.0]))
            .is_ok());
        assert!(EulerConfig::new(0.0, Scheme::Brownian).is_err());
        assert_eq!(EulerConfig::default_dt(0.01), 1e-4);
    }

    #[test]
    fn scheme_driver_mismatch_and_alpha_range() {
        let ou = DriftField::ou(1).unwrap();
        let mut rng = RngStream::from_seed(1);
        let bm = EulerConfig::new(0.01, Scheme::Brownian).unwrap();
        let sub = EulerConfig::new(0.01, Scheme::Subordinated).unwrap();
        assert!(integrate_stable(&ou, &bm, 1.5, &[0.0], 1.0, &mut rng).is_err());
        assert!(integrate_bm(&ou, &sub, &[0.0], 1.0, &mut rng).is_err());
        assert!(integrate_stable(&ou, &sub, 1.0, &[0.0], 1.0, &mut rng).is_err());
        assert!(integrate_stable(&ou, &sub, 2.0, &[0.0], 1.0, &mut rng).is_err());
    }

    #[test]
    fn explosion_is_reported_with_step() {
        let unstable = DriftField::new("blowup", 1, 1.0, 0.0, 0.0, 0.0, |x, o| o[0] = x[0] * x[0]).unwrap();
        let cfg = EulerConfig::new(0.1, Scheme::Brownian).unwrap();
        let err = integrate_bm(&unstable, &cfg, &[10.0], 10.0, &mut RngStream::from_seed(0)).unwrap_err();
        assert!(matches!(err, LabError::NonFinite { step } if step > 0));
        let ens = run_ensemble(
            &unstable,
            &cfg,
            Driver::Brownian,
            &[10.0],
            10.0,
            4,
            &RngStream::from_seed(0),
            None,
        );
        assert!(matches!(
            ens,
            Err(LabError::Ensemble {
                failed: 4,
                total: 4,
                path: 0,
                ..
            })
        ));
    }

    #[test]
    fn final_step_hits_horizon() {
        let zero = DriftField::zero(1).unwrap();
        let cfg = EulerConfig::new(0.3, Scheme::Brownian).unwrap();
        let mut steps = 0;
        let mut rng = RngStream::from_seed(5);
        simulate_path(&zero, &cfg, Driver::Brownian, &[0.0], &[0.5, 1.0], &mut rng, |_, _| {
            steps += 1
        })
        .unwrap();
        assert_eq!(steps, 2);
    }

    #[test]
    fn single_path_ensemble_matches_integrate() {
        let ou = DriftField::ou(2).unwrap();
        let cfg = EulerConfig::new(0.01, Scheme::Subordinated).unwrap();
        let root = RngStream::new(9, 1);
        let ens = run_ensemble(
            &ou,
            &cfg,
            Driver::Stable { alpha: 1.5 },
            &[1.0, -1.0],
            0.5,
            1,
            &root,
            None,
        )
        .unwrap();
        let mut rng = root.fork(0);
        let x = integrate_stable(&ou, &cfg, 1.5, &[1.0, -1.0], 0.5, &mut rng).unwrap();
        assert_eq!(ens.row(0), x.as_slice());
    }

    #[test]
    fn constant_observable_has_zero_error() {
        let ou = DriftField::ou(1).unwrap();
        let cfg = EulerConfig::new(0.05, Scheme::Brownian).unwrap();
        let est = mc_semigroup(
            &|_| 1.0,
            1.0,
            &ou,
            &cfg,
            Driver::Brownian,
            &[0.3],
            1.0,
            500,
            &RngStream::from_seed(2),
        )
        .unwrap();
        assert_eq!(est.estimate, 1.0);
        assert_eq!(est.std_error, 0.0);
    }
}
