//! Exact-in-law samplers for the half-speed stable family.
//!
//! Every sampler targets the normalization in which the symmetric stable
//! process satisfies `E exp(i xi L_t) = exp(-t |xi|^alpha / 2)`; at
//! `alpha = 2` this is a standard Brownian motion. The subordinator `S_t`
//! is the `alpha/2`-stable one with `E exp(-r S_t) = exp(-t (2r)^{alpha/2} / 2)`,
//! so that `W_{S_t}` has the law of `L_t`.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, LabError, Result};
use crate::rng::RngStream;

/// Draws per chunk when sample sets are generated in parallel.
pub const CHUNK: usize = 4096;

/// Default number of blocks for [`robust_mean`].
pub const DEFAULT_BLOCKS: usize = 32;

/// Law of `L_t` for the half-speed symmetric `alpha`-stable process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StableSpec {
    pub alpha: f64,
    pub time: f64,
}

impl StableSpec {
    pub fn new(alpha: f64, time: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 2.0) {
            return Err(domain("alpha", alpha, "(0, 2]"));
        }
        if !(time > 0.0 && time.is_finite()) {
            return Err(domain("t", time, "(0, inf)"));
        }
        Ok(Self { alpha, time })
    }

    /// Multiplier turning a unit-scale draw (cf `exp(-|xi|^alpha)`) into a draw of `L_t`.
    pub fn scale(&self) -> f64 {
        (self.time / 2.0).powf(1.0 / self.alpha)
    }
}

/// Law of `S_t` for the `alpha/2`-stable subordinator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubordinatorSpec {
    pub alpha: f64,
    pub time: f64,
}

impl SubordinatorSpec {
    pub fn new(alpha: f64, time: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 2.0) {
            return Err(domain("alpha", alpha, "(0, 2)"));
        }
        if !(time > 0.0 && time.is_finite()) {
            return Err(domain("t", time, "(0, inf)"));
        }
        Ok(Self { alpha, time })
    }

    /// Multiplier turning a draw with Laplace transform `exp(-r^{alpha/2})` into `S_t`.
    pub fn scale(&self) -> f64 {
        2.0 * (self.time / 2.0).powf(2.0 / self.alpha)
    }

    /// Target Laplace transform `E exp(-r S_t)`.
    pub fn laplace(&self, r: f64) -> f64 {
        (-0.5 * self.time * (2.0 * r).powf(self.alpha / 2.0)).exp()
    }
}

/// Chambers–Mallows–Stuck draw with characteristic function `exp(-|xi|^alpha)`, `0 < alpha < 2`.
#[inline]
pub fn unit_sym_stable(alpha: f64, rng: &mut RngStream) -> f64 {
    let v = PI * (rng.uniform_open() - 0.5);
    let w = rng.exp1();
    if alpha == 1.0 {
        return v.tan();
    }
    (alpha * v).sin() / v.cos().powf(1.0 / alpha) * (((1.0 - alpha) * v).cos() / w).powf((1.0 - alpha) / alpha)
}

/// Kanter draw with Laplace transform `exp(-r^beta)`, `0 < beta < 1`.
#[inline]
pub fn unit_positive_stable(beta: f64, rng: &mut RngStream) -> f64 {
    loop {
        let u = PI * rng.uniform_open();
        let e = rng.exp1();
        let ln = (beta * u).sin().ln() - u.sin().ln() / beta
            + (1.0 - beta) / beta * (((1.0 - beta) * u).sin().ln() - e.ln());
        let s = ln.exp();
        // exp underflow is the only way to lose positivity
        if s > 0.0 && s.is_finite() {
            return s;
        }
    }
}

/// One draw of `L_t`.
pub fn sample_sym_stable(spec: StableSpec, rng: &mut RngStream) -> f64 {
    if spec.alpha == 2.0 {
        spec.time.sqrt() * rng.normal()
    } else {
        spec.scale() * unit_sym_stable(spec.alpha, rng)
    }
}

/// One draw of `S_t`; always strictly positive.
pub fn sample_subordinator(spec: SubordinatorSpec, rng: &mut RngStream) -> f64 {
    spec.scale() * unit_positive_stable(spec.alpha / 2.0, rng)
}

/// Fills `out` with a draw of the `d`-dimensional `L_t`, built as `sqrt(S_t) * G`.
pub fn fill_stable_vector(alpha: f64, t: f64, rng: &mut RngStream, out: &mut [f64]) -> Result<()> {
    if out.is_empty() {
        return Err(domain("d", 0.0, "d >= 1"));
    }
    let mult = if alpha == 2.0 {
        StableSpec::new(alpha, t)?;
        t.sqrt()
    } else {
        sample_subordinator(SubordinatorSpec::new(alpha, t)?, rng).sqrt()
    };
    for x in out.iter_mut() {
        *x = mult * rng.normal();
    }
    Ok(())
}

/// One draw of the rotationally invariant `d`-dimensional `L_t`.
pub fn sample_stable_vector(alpha: f64, t: f64, d: usize, rng: &mut RngStream) -> Result<Vec<f64>> {
    let mut out = vec![0.0; d];
    fill_stable_vector(alpha, t, rng, &mut out)?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Generator {
    SymStable,
    Subordinator,
    StableVector,
    /// Samples produced elsewhere (e.g. SDE endpoints); not regenerable from the meta alone.
    External(String),
}

/// Provenance of a [`SampleSet`]. Serialized as the JSON sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub generator: Generator,
    pub alpha: f64,
    pub t: f64,
    pub d: usize,
    pub seed: u64,
    pub stream: u64,
    pub n: usize,
}

/// Immutable collection of i.i.d. scalar or vector samples, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    values: Vec<f64>,
    meta: SampleMeta,
}

impl SampleSet {
    pub fn new(values: Vec<f64>, meta: SampleMeta) -> Result<Self> {
        if values.is_empty() {
            return Err(LabError::Empty("sample set"));
        }
        if meta.d == 0 || !values.len().is_multiple_of(meta.d) {
            return Err(LabError::Invalid(format!(
                "{} values do not form rows of dimension {}",
                values.len(),
                meta.d
            )));
        }
        let mut meta = meta;
        meta.n = values.len() / meta.d;
        Ok(Self { values, meta })
    }

    /// Wraps externally produced scalar values.
    pub fn from_values(values: Vec<f64>, label: &str) -> Result<Self> {
        let n = values.len();
        Self::new(
            values,
            SampleMeta {
                generator: Generator::External(label.to_string()),
                alpha: f64::NAN,
                t: f64::NAN,
                d: 1,
                seed: 0,
                stream: 0,
                n,
            },
        )
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn meta(&self) -> &SampleMeta {
        &self.meta
    }

    pub fn dim(&self) -> usize {
        self.meta.d
    }

    pub fn len(&self) -> usize {
        self.meta.n
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.meta.d..(i + 1) * self.meta.d]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.values.chunks_exact(self.meta.d)
    }

    /// Maps scalar values through `f`, keeping the provenance.
    pub fn map(&self, label: &str, f: impl Fn(f64) -> f64) -> Result<SampleSet> {
        let mut meta = self.meta.clone();
        meta.generator = Generator::External(label.to_string());
        SampleSet::new(self.values.iter().map(|&v| f(v)).collect(), meta)
    }

    /// `n` draws of `L_t`, generated chunk-wise from `RngStream::new(seed, stream)`.
    pub fn sym_stable(spec: StableSpec, n: usize, seed: u64, stream: u64) -> Result<Self> {
        let values = generate_chunked(n, 1, seed, stream, |rng, out| {
            out[0] = sample_sym_stable(spec, rng);
            Ok(())
        })?;
        Self::new(
            values,
            meta(Generator::SymStable, spec.alpha, spec.time, 1, seed, stream, n),
        )
    }

    /// `n` draws of `S_t`.
    pub fn subordinator(spec: SubordinatorSpec, n: usize, seed: u64, stream: u64) -> Result<Self> {
        let values = generate_chunked(n, 1, seed, stream, |rng, out| {
            out[0] = sample_subordinator(spec, rng);
            Ok(())
        })?;
        Self::new(
            values,
            meta(Generator::Subordinator, spec.alpha, spec.time, 1, seed, stream, n),
        )
    }

    /// `n` draws of the `d`-dimensional `L_t`.
    pub fn stable_vector(alpha: f64, t: f64, d: usize, n: usize, seed: u64, stream: u64) -> Result<Self> {
        if d == 0 {
            return Err(domain("d", 0.0, "d >= 1"));
        }
        let values = generate_chunked(n, d, seed, stream, |rng, out| fill_stable_vector(alpha, t, rng, out))?;
        Self::new(values, meta(Generator::StableVector, alpha, t, d, seed, stream, n))
    }

    /// Rebuilds a generated sample set bit-for-bit from its provenance.
    pub fn regenerate(meta: &SampleMeta) -> Result<Self> {
        match &meta.generator {
            Generator::SymStable => {
                Self::sym_stable(StableSpec::new(meta.alpha, meta.t)?, meta.n, meta.seed, meta.stream)
            }
            Generator::Subordinator => Self::subordinator(
                SubordinatorSpec::new(meta.alpha, meta.t)?,
                meta.n,
                meta.seed,
                meta.stream,
            ),
            Generator::StableVector => Self::stable_vector(meta.alpha, meta.t, meta.d, meta.n, meta.seed, meta.stream),
            Generator::External(label) => Err(LabError::Invalid(format!(
                "sample set `{label}` was produced externally and cannot be regenerated"
            ))),
        }
    }

    /// Writes `<stem>.csv` (header `value` or `v1..vd`) and `<stem>.json` (the meta).
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_path(dir.join(format!("{stem}.csv")))?;
        if self.dim() == 1 {
            w.write_record(["value"])?;
        } else {
            w.write_record((1..=self.dim()).map(|i| format!("v{i}")))?;
        }
        for row in self.rows() {
            w.write_record(row.iter().map(|v| format!("{v:e}")))?;
        }
        w.flush()?;
        let mut side = BufWriter::new(File::create(dir.join(format!("{stem}.json")))?);
        serde_json::to_writer_pretty(&mut side, &self.meta)?;
        side.flush()?;
        Ok(())
    }

    pub fn read(dir: &Path, stem: &str) -> Result<Self> {
        let meta: SampleMeta = serde_json::from_reader(File::open(dir.join(format!("{stem}.json")))?)?;
        let mut r = csv::Reader::from_path(dir.join(format!("{stem}.csv")))?;
        let mut values = Vec::with_capacity(meta.n * meta.d);
        for rec in r.records() {
            for field in rec?.iter() {
                values.push(
                    field
                        .trim()
                        .parse::<f64>()
                        .map_err(|e| LabError::Invalid(format!("bad value `{field}`: {e}")))?,
                );
            }
        }
        Self::new(values, meta)
    }
}

fn meta(generator: Generator, alpha: f64, t: f64, d: usize, seed: u64, stream: u64, n: usize) -> SampleMeta {
    SampleMeta {
        generator,
        alpha,
        t,
        d,
        seed,
        stream,
        n,
    }
}

/// Generates `n` rows of width `d`; chunk `c` draws from `RngStream::new(seed, stream).fork(c)`,
/// so the output does not depend on the number of rayon workers.
pub fn generate_chunked<F>(n: usize, d: usize, seed: u64, stream: u64, draw: F) -> Result<Vec<f64>>
where
    F: Fn(&mut RngStream, &mut [f64]) -> Result<()> + Sync,
{
    if n == 0 {
        return Err(LabError::Empty("sample count"));
    }
    let base = RngStream::new(seed, stream);
    let mut values = vec![0.0; n * d];
    values
        .par_chunks_mut(CHUNK * d)
        .enumerate()
        .try_for_each(|(c, chunk)| {
            let mut rng = base.fork(c as u64);
            for row in chunk.chunks_exact_mut(d) {
                draw(&mut rng, row)?;
            }
            Ok::<(), LabError>(())
        })?;
    Ok(values)
}

/// Empirical characteristic function with its standard-error bound `1/sqrt(N)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CharFnEstimate {
    pub re: f64,
    pub im: f64,
    pub std_error: f64,
}

impl CharFnEstimate {
    pub fn abs_diff(&self, re: f64, im: f64) -> f64 {
        (self.re - re).hypot(self.im - im)
    }
}

/// `(1/N) sum exp(i <xi, X_k>)`.
pub fn empirical_char_fn(samples: &SampleSet, xi: &[f64]) -> Result<CharFnEstimate> {
    if xi.len() != samples.dim() {
        return Err(LabError::Dimension {
            expected: samples.dim(),
            got: xi.len(),
        });
    }
    let (mut re, mut im) = (0.0, 0.0);
    for row in samples.rows() {
        let phase: f64 = row.iter().zip(xi).map(|(x, k)| x * k).sum();
        let (s, c) = phase.sin_cos();
        re += c;
        im += s;
    }
    let n = samples.len() as f64;
    Ok(CharFnEstimate {
        re: re / n,
        im: im / n,
        std_error: 1.0 / n.sqrt(),
    })
}

/// Median-of-means estimate with an error bar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RobustMean {
    pub estimate: f64,
    /// `sqrt(pi/2) * sd(block means) / sqrt(blocks)`; zero when `blocks == 1`.
    pub std_error: f64,
    pub blocks: usize,
}

/// Median of the means of `blocks` near-equal consecutive blocks.
pub fn robust_mean(values: &[f64], blocks: usize) -> Result<f64> {
    Ok(robust_mean_with_error(values, blocks)?.estimate)
}

pub fn robust_mean_with_error(values: &[f64], blocks: usize) -> Result<RobustMean> {
    if values.is_empty() {
        return Err(LabError::Empty("sample set"));
    }
    if blocks == 0 {
        return Err(domain("blocks", 0.0, "blocks >= 1"));
    }
    let n = values.len();
    let blocks = blocks.min(n);
    if blocks == 1 {
        return Ok(RobustMean {
            estimate: values.iter().sum::<f64>() / n as f64,
            std_error: 0.0,
            blocks,
        });
    }
    let mut means: Vec<f64> = (0..blocks)
        .map(|b| {
            let block = &values[b * n / blocks..(b + 1) * n / blocks];
            block.iter().sum::<f64>() / block.len() as f64
        })
        .collect();
    let k = means.len() as f64;
    let avg = means.iter().sum::<f64>() / k;
    let sd = (means.iter().map(|m| (m - avg).powi(2)).sum::<f64>() / (k - 1.0)).sqrt();
    means.sort_by(f64::total_cmp);
    let mid = means.len() / 2;
    let estimate = if means.len() % 2 == 1 {
        means[mid]
    } else {
        0.5 * (means[mid - 1] + means[mid])
    };
    Ok(RobustMean {
        estimate,
        std_error: FRAC_PI_2.sqrt() * sd / k.sqrt(),
        blocks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_specs() {
        assert!(StableSpec::new(0.0, 1.0).is_err());
        assert!(StableSpec::new(2.1, 1.0).is_err());
        assert!(StableSpec::new(1.5, 0.0).is_err());
        assert!(StableSpec::new(2.0, 1.0).is_ok());
        assert!(SubordinatorSpec::new(2.0, 1.0).is_err());
        assert!(SubordinatorSpec::new(1.0, -1.0).is_err());
        let mut rng = RngStream::from_seed(1);
        assert!(sample_stable_vector(1.5, 1.0, 0, &mut rng).is_err());
    }

    #[test]
    fn alpha_two_is_standard_gaussian_scaled() {
        let mut a = RngStream::new(3, 0);
        let mut b = RngStream::new(3, 0);
        let x = sample_sym_stable(StableSpec::new(2.0, 4.0).unwrap(), &mut a);
        assert_eq!(x, 2.0 * b.normal());
        let v = sample_stable_vector(2.0, 4.0, 2, &mut a).unwrap();
        assert_eq!(v, vec![2.0 * b.normal(), 2.0 * b.normal()]);
    }

    #[test]
    fn subordinator_scale_matches_levy_case() {
        // alpha = 1, t = 1: S_1 = 1/(4 Z^2), so the scale on the exp(-sqrt r) draw is 1/2
        let spec = SubordinatorSpec::new(1.0, 1.0).unwrap();
        assert!((spec.scale() - 0.5).abs() < 1e-15);
        assert!((spec.laplace(1.0) - (-(0.5f64).sqrt()).exp()).abs() < 1e-15);
    }

    #[test]
    fn char_fn_degenerate_laws() {
        let s = SampleSet::from_values(vec![0.7; 10], "const").unwrap();
        let cf0 = empirical_char_fn(&s, &[0.0]).unwrap();
        assert_eq!((cf0.re, cf0.im), (1.0, 0.0));
        let cf = empirical_char_fn(&s, &[2.0]).unwrap();
        assert!((cf.re - 1.4f64.cos()).abs() < 1e-14 && (cf.im - 1.4f64.sin()).abs() < 1e-14);
        assert!(empirical_char_fn(&s, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn robust_mean_basics() {
        assert_eq!(robust_mean(&[2.5; 100], 7).unwrap(), 2.5);
        let v: Vec<f64> = (0..10).map(|i| i as f64).collect();
        assert_eq!(robust_mean(&v, 1).unwrap(), 4.5);
        // blocks of 2: means 0.5, 2.5, 4.5, 6.5, 8.5
        assert_eq!(robust_mean(&v, 5).unwrap(), 4.5);
        let mut outlier = vec![1.0; 99];
        outlier.push(1e12);
        assert_eq!(robust_mean(&outlier, 10).unwrap(), 1.0);
        assert!(robust_mean(&[], 3).is_err());
        assert!(robust_mean(&v, 0).is_err());
    }

    #[test]
    fn sample_sets_are_deterministic_and_regenerable() {
        let spec = SubordinatorSpec::new(1.3, 0.7).unwrap();
        let a = SampleSet::subordinator(spec, 10_000, 42, 9).unwrap();
        let b = SampleSet::regenerate(a.meta()).unwrap();
        assert_eq!(a, b);
        assert!(a.values().iter().all(|&s| s > 0.0));
        let c = SampleSet::subordinator(spec, 10_000, 42, 10).unwrap();
        assert_ne!(a.values(), c.values());
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let s = SampleSet::stable_vector(1.5, 1.0, 3, 50, 1, 2).unwrap();
        s.write(dir.path(), "vec").unwrap();
        let header = std::fs::read_to_string(dir.path().join("vec.csv")).unwrap();
        assert!(header.starts_with("v1,v2,v3\n"));
        let back = SampleSet::read(dir.path(), "vec").unwrap();
        assert_eq!(back, s);
        let side: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("vec.json")).unwrap()).unwrap();
        for key in ["alpha", "t", "d", "seed", "stream", "n"] {
            assert!(side.get(key).is_some(), "missing {key}");
        }
    }
}
