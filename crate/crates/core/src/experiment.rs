//! Configuration-driven verification campaigns and their reports.
//!
//! A campaign reads an [`ExperimentConfig`] (TOML), runs deterministically
//! from its seed, writes `report.json` plus `data/*.csv` under the output
//! directory, and records every numerical claim as a [`Check`]. Failures of
//! individual steps become failed checks; the remaining checks still run.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::constants::{ratio_error_constant, s_inverse_moment, ConstantReport};
use crate::distance::{
    default_bins, ks_critical, ks_two_sample, loglog_fit, rate_fit, tv_cf_lower_bound_paired, tv_from_samples_1d,
    tv_mixture_gaussian,
};
use crate::error::{LabError, Result};
use crate::grid::GridSpec;
use crate::ou::{exact_tv_curve, exact_tv_mu, indicator_gradient_at_zero, lb_curve};
use crate::poisson::{
    lin_norm, lin_norm_diff, mu_h_estimate, poisson_grid, poisson_residuals, poisson_solution, Engine, GridFunction,
    Observable, PoissonOptions, PoissonProblem,
};
use crate::rng::RngStream;
use crate::sampling::{empirical_char_fn, robust_mean, SampleSet, StableSpec, SubordinatorSpec, DEFAULT_BLOCKS};
use crate::sde::{
    brownian_ou_variance, mc_estimate, run_ensemble, subordinated_ou_mixture, with_workers, DriftField, Driver,
    Ensemble, EulerConfig, Scheme,
};

/// Environment variable overriding the configured seed.
pub const SEED_ENV: &str = "STABLE_TV_LAB_SEED";
/// Environment variable overriding the configured worker count.
pub const WORKERS_ENV: &str = "STABLE_TV_LAB_WORKERS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Campaign {
    VerifySamplers,
    MomentCheck,
    OuRate,
    TvTheorem,
    PoissonRate,
    Constants,
    GradientProbe,
}

impl Campaign {
    pub const ALL: [Campaign; 7] = [
        Campaign::VerifySamplers,
        Campaign::MomentCheck,
        Campaign::OuRate,
        Campaign::TvTheorem,
        Campaign::PoissonRate,
        Campaign::Constants,
        Campaign::GradientProbe,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Campaign::VerifySamplers => "verify-samplers",
            Campaign::MomentCheck => "moment-check",
            Campaign::OuRate => "ou-rate",
            Campaign::TvTheorem => "tv-theorem",
            Campaign::PoissonRate => "poisson-rate",
            Campaign::Constants => "constants",
            Campaign::GradientProbe => "gradient-probe",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Campaign::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| LabError::Config {
                path: "campaign".into(),
                message: format!("unknown campaign '{s}'"),
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerParams {
    pub alphas: Vec<f64>,
    pub xis: Vec<f64>,
    pub n: usize,
    /// Laplace arguments `r` for the subordinator check.
    pub laplace_r: Vec<f64>,
    /// Time used by the scaling-law check.
    pub scaling_t: f64,
    pub ks_level: f64,
}

impl Default for SamplerParams {
    fn default() -> Self {
        Self {
            alphas: vec![1.2, 1.5, 1.8],
            xis: vec![0.5, 1.0, 2.0],
            n: 100_000,
            laplace_r: vec![0.5, 1.0, 2.0],
            scaling_t: 2.0,
            ks_level: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MomentParams {
    pub alphas: Vec<f64>,
    pub times: Vec<f64>,
    pub n: usize,
    pub rel_tol: f64,
}

impl Default for MomentParams {
    fn default() -> Self {
        Self {
            alphas: vec![1.0, 1.25, 1.5, 1.75],
            times: vec![0.5, 1.0, 2.0],
            n: 1_000_000,
            rel_tol: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OuRateParams {
    pub alphas: Vec<f64>,
    pub slope_tol: f64,
    /// `alpha` at which `lb_curve / (2 - alpha)` is compared with its limit.
    pub lb_alpha: f64,
    pub lb_rel_tol: f64,
    pub grid: GridSpec,
}

impl Default for OuRateParams {
    fn default() -> Self {
        Self {
            alphas: vec![1.9, 1.95, 1.99, 1.995],
            slope_tol: 0.1,
            lb_alpha: 1.999,
            lb_rel_tol: 0.002,
            grid: GridSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TvParams {
    pub alphas: Vec<f64>,
    pub d: usize,
    pub t: f64,
    pub n: usize,
    pub dt: f64,
    pub x0: f64,
    /// Frequencies of the characteristic-function lower bound.
    pub xis: Vec<f64>,
    pub slope_tol: f64,
    pub noise_floor_max: f64,
    /// Compare sample TV with the exact ergodic TV (needs `t` near equilibrium).
    pub compare_exact: bool,
}

impl Default for TvParams {
    fn default() -> Self {
        Self {
            alphas: vec![1.6, 1.7, 1.8, 1.9],
            d: 1,
            t: 5.0,
            n: 100_000,
            dt: 0.01,
            x0: 0.0,
            xis: vec![1.0],
            slope_tol: 0.15,
            noise_floor_max: 0.05,
            compare_exact: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoissonParams {
    pub alphas: Vec<f64>,
    pub grid: GridSpec,
    pub h: Observable,
    /// Used when `h` has no closed-form semigroup.
    pub mc: Option<McParams>,
    pub brownian_window: f64,
    pub brownian_tol: f64,
    pub interior_fraction: f64,
    pub stable_tol: f64,
    /// Largest allowed max/min of `lin_norm_diff / ((2 - alpha) log(1 / (2 - alpha)))`.
    pub spread_max: f64,
    pub tail_tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McParams {
    pub n: usize,
    pub dt: f64,
    pub t_max: f64,
    pub quad_steps: usize,
}

impl Default for PoissonParams {
    fn default() -> Self {
        Self {
            alphas: vec![1.8, 1.9, 1.95, 1.99],
            grid: GridSpec {
                x_min: -40.0,
                x_max: 40.0,
                n_cells: 4000,
            },
            h: Observable::Cos,
            mc: None,
            brownian_window: 3.0,
            brownian_tol: 1e-3,
            interior_fraction: 0.8,
            stable_tol: 1e-2,
            spread_max: 3.0,
            tail_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstantsParams {
    pub dims: Vec<usize>,
    pub alphas: Vec<f64>,
}

impl Default for ConstantsParams {
    fn default() -> Self {
        Self {
            dims: vec![1, 2, 3],
            alphas: vec![1.5, 1.9],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradientParams {
    /// `2` selects the Brownian driver.
    pub alphas: Vec<f64>,
    pub times: Vec<f64>,
    pub n: usize,
    pub x: f64,
    /// Finite-difference half-width as a fraction of the endpoint IQR.
    pub delta_frac: f64,
    pub steps_per_t: usize,
    pub stable_tol: f64,
    pub brownian_tol: f64,
    pub smooth_bound: f64,
}

impl Default for GradientParams {
    fn default() -> Self {
        Self {
            alphas: vec![1.5, 2.0],
            times: vec![1e-3, 10f64.powf(-2.5), 1e-2, 10f64.powf(-1.5), 1e-1],
            n: 100_000,
            x: 0.0,
            delta_frac: 0.1,
            steps_per_t: 50,
            stable_tol: 0.1,
            brownian_tol: 0.05,
            smooth_bound: 1.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CampaignParams {
    VerifySamplers(SamplerParams),
    MomentCheck(MomentParams),
    OuRate(OuRateParams),
    TvTheorem(TvParams),
    PoissonRate(PoissonParams),
    Constants(ConstantsParams),
    GradientProbe(GradientParams),
}

impl CampaignParams {
    pub fn default_for(c: Campaign) -> Self {
        match c {
            Campaign::VerifySamplers => Self::VerifySamplers(Default::default()),
            Campaign::MomentCheck => Self::MomentCheck(Default::default()),
            Campaign::OuRate => Self::OuRate(Default::default()),
            Campaign::TvTheorem => Self::TvTheorem(Default::default()),
            Campaign::PoissonRate => Self::PoissonRate(Default::default()),
            Campaign::Constants => Self::Constants(Default::default()),
            Campaign::GradientProbe => Self::GradientProbe(Default::default()),
        }
    }

    fn parse(c: Campaign, table: toml::Table) -> Result<Self> {
        fn de<T: DeserializeOwned>(table: toml::Table) -> Result<T> {
            T::deserialize(toml::Value::Table(table)).map_err(|e| LabError::Config {
                path: "params".into(),
                message: e.to_string().trim().to_string(),
            })
        }
        Ok(match c {
            Campaign::VerifySamplers => Self::VerifySamplers(de(table)?),
            Campaign::MomentCheck => Self::MomentCheck(de(table)?),
            Campaign::OuRate => Self::OuRate(de(table)?),
            Campaign::TvTheorem => Self::TvTheorem(de(table)?),
            Campaign::PoissonRate => Self::PoissonRate(de(table)?),
            Campaign::Constants => Self::Constants(de(table)?),
            Campaign::GradientProbe => Self::GradientProbe(de(table)?),
        })
    }

    fn campaign(&self) -> Campaign {
        match self {
            Self::VerifySamplers(_) => Campaign::VerifySamplers,
            Self::MomentCheck(_) => Campaign::MomentCheck,
            Self::OuRate(_) => Campaign::OuRate,
            Self::TvTheorem(_) => Campaign::TvTheorem,
            Self::PoissonRate(_) => Campaign::PoissonRate,
            Self::Constants(_) => Campaign::Constants,
            Self::GradientProbe(_) => Campaign::GradientProbe,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub campaign: Campaign,
    pub seed: u64,
    /// Worker threads; `None` uses every core. Never affects results.
    pub workers: Option<usize>,
    pub output_dir: PathBuf,
    pub params: CampaignParams,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    campaign: String,
    seed: Option<u64>,
    workers: Option<usize>,
    output_dir: Option<PathBuf>,
    params: Option<toml::Table>,
}

fn cfg_err(path: impl Into<String>, message: impl Into<String>) -> LabError {
    LabError::Config {
        path: path.into(),
        message: message.into(),
    }
}

impl ExperimentConfig {
    pub fn new(campaign: Campaign, seed: u64) -> Self {
        Self {
            campaign,
            seed,
            workers: None,
            output_dir: PathBuf::from(format!("runs/{}", campaign.name())),
            params: CampaignParams::default_for(campaign),
        }
    }

    /// Parses and validates a TOML config. Missing parameters take their defaults.
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(s).map_err(|e| cfg_err("<root>", e.message()))?;
        let campaign = Campaign::parse(&raw.campaign)?;
        let mut cfg = Self::new(campaign, raw.seed.unwrap_or(0));
        cfg.workers = raw.workers;
        if let Some(dir) = raw.output_dir {
            cfg.output_dir = dir;
        }
        if let Some(table) = raw.params {
            cfg.params = CampaignParams::parse(campaign, table)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| cfg_err(path.display().to_string(), e.to_string()))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| LabError::Invalid(e.to_string()))
    }

    /// Applies the seed and worker environment overrides.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| cfg_err(SEED_ENV, format!("not an integer: '{v}'")))?;
        }
        if let Ok(v) = std::env::var(WORKERS_ENV) {
            let w: usize = v
                .trim()
                .parse()
                .map_err(|_| cfg_err(WORKERS_ENV, format!("not an integer: '{v}'")))?;
            self.workers = Some(w);
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        if self.params.campaign() != self.campaign {
            return Err(cfg_err("params", "parameters belong to another campaign"));
        }
        if self.workers == Some(0) {
            return Err(cfg_err("workers", "must be >= 1"));
        }
        let alphas = |v: &[f64], lo: f64, hi: f64, lo_open: bool| -> Result<()> {
            if v.is_empty() {
                return Err(cfg_err("params.alphas", "empty"));
            }
            for (i, &a) in v.iter().enumerate() {
                let ok = a <= hi && if lo_open { a > lo } else { a >= lo };
                if !ok {
                    let open = if lo_open { "(" } else { "[" };
                    return Err(cfg_err(
                        format!("params.alphas[{i}]"),
                        format!("{a} outside {open}{lo}, {hi}]"),
                    ));
                }
            }
            Ok(())
        };
        let positive = |name: &str, v: f64| -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(cfg_err(format!("params.{name}"), format!("{v} must be positive")))
            }
        };
        let count = |name: &str, v: usize, min: usize| -> Result<()> {
            if v >= min {
                Ok(())
            } else {
                Err(cfg_err(format!("params.{name}"), format!("{v} must be >= {min}")))
            }
        };
        match &self.params {
            CampaignParams::VerifySamplers(p) => {
                alphas(&p.alphas, 0.0, 2.0, true)?;
                count("n", p.n, 2)?;
                positive("scaling_t", p.scaling_t)?;
                if !(p.ks_level > 0.0 && p.ks_level < 1.0) {
                    return Err(cfg_err("params.ks_level", "must lie in (0, 1)"));
                }
            }
            CampaignParams::MomentCheck(p) => {
                alphas(&p.alphas, 0.0, 2.0, true)?;
                count("n", p.n, DEFAULT_BLOCKS)?;
                for (i, &t) in p.times.iter().enumerate() {
                    positive(&format!("times[{i}]"), t)?;
                }
                positive("rel_tol", p.rel_tol)?;
            }
            CampaignParams::OuRate(p) => {
                alphas(&p.alphas, 1.05, 1.9995, false)?;
                count("alphas.len()", p.alphas.len(), 3)?;
                if !(p.lb_alpha > 0.0 && p.lb_alpha < 2.0) {
                    return Err(cfg_err("params.lb_alpha", "must lie in (0, 2)"));
                }
                GridSpec::new(p.grid.x_min, p.grid.x_max, p.grid.n_cells)
                    .map_err(|e| cfg_err("params.grid", e.to_string()))?;
            }
            CampaignParams::TvTheorem(p) => {
                alphas(&p.alphas, 1.0, 2.0, true)?;
                if !(1..=3).contains(&p.d) {
                    return Err(cfg_err("params.d", format!("{} outside [1, 3]", p.d)));
                }
                count("n", p.n, 2)?;
                positive("t", p.t)?;
                positive("dt", p.dt)?;
                if p.xis.is_empty() {
                    return Err(cfg_err("params.xis", "empty"));
                }
            }
            CampaignParams::PoissonRate(p) => {
                alphas(&p.alphas, 1.0, 2.0, true)?;
                p.h.validate().map_err(|e| cfg_err("params.h", e.to_string()))?;
                GridSpec::new(p.grid.x_min, p.grid.x_max, p.grid.n_cells)
                    .map_err(|e| cfg_err("params.grid", e.to_string()))?;
                if p.h != Observable::Cos && p.mc.is_none() {
                    return Err(cfg_err("params.mc", "required when h has no closed-form semigroup"));
                }
                if let Some(mc) = &p.mc {
                    count("mc.n", mc.n, 2)?;
                    positive("mc.dt", mc.dt)?;
                    positive("mc.t_max", mc.t_max)?;
                    count("mc.quad_steps", mc.quad_steps, 2)?;
                }
                if !(p.interior_fraction > 0.0 && p.interior_fraction <= 1.0) {
                    return Err(cfg_err("params.interior_fraction", "must lie in (0, 1]"));
                }
            }
            CampaignParams::Constants(p) => {
                alphas(&p.alphas, 0.0, 2.0, true)?;
                if let Some(i) = p.dims.iter().position(|&d| d == 0) {
                    return Err(cfg_err(format!("params.dims[{i}]"), "must be >= 1"));
                }
            }
            CampaignParams::GradientProbe(p) => {
                alphas(&p.alphas, 1.0, 2.0, true)?;
                count("times.len()", p.times.len(), 3)?;
                for (i, &t) in p.times.iter().enumerate() {
                    positive(&format!("times[{i}]"), t)?;
                }
                count("n", p.n, 2)?;
                positive("delta_frac", p.delta_frac)?;
                count("steps_per_t", p.steps_per_t, 1)?;
            }
        }
        Ok(())
    }
}

/// How `value` is compared with `expected`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Relation {
    /// `|value - expected| <= tolerance`
    Within,
    /// `value <= expected + tolerance`
    AtMost,
    /// `value >= expected - tolerance`
    AtLeast,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: Option<f64>,
    pub expected: f64,
    pub tolerance: f64,
    pub relation: Relation,
    pub pass: bool,
    /// Where `expected` comes from: `closed-form`, `identity`, `monte-carlo`, `shape`, ...
    pub provenance: String,
    pub error: Option<String>,
}

impl Check {
    pub fn new(
        name: impl Into<String>,
        value: f64,
        relation: Relation,
        expected: f64,
        tolerance: f64,
        provenance: &str,
    ) -> Self {
        let pass = value.is_finite()
            && match relation {
                Relation::Within => (value - expected).abs() <= tolerance,
                Relation::AtMost => value <= expected + tolerance,
                Relation::AtLeast => value >= expected - tolerance,
            };
        Self {
            name: name.into(),
            value: value.is_finite().then_some(value),
            expected,
            tolerance,
            relation,
            pass,
            provenance: provenance.to_string(),
            error: None,
        }
    }

    pub fn within(name: impl Into<String>, value: f64, expected: f64, tolerance: f64, provenance: &str) -> Self {
        Self::new(name, value, Relation::Within, expected, tolerance, provenance)
    }

    pub fn at_most(name: impl Into<String>, value: f64, bound: f64, provenance: &str) -> Self {
        Self::new(name, value, Relation::AtMost, bound, 0.0, provenance)
    }

    pub fn at_least(name: impl Into<String>, value: f64, bound: f64, provenance: &str) -> Self {
        Self::new(name, value, Relation::AtLeast, bound, 0.0, provenance)
    }

    /// Boolean property, recorded as value 1 (holds) or 0.
    pub fn holds(name: impl Into<String>, ok: bool, provenance: &str) -> Self {
        Self::within(name, if ok { 1.0 } else { 0.0 }, 1.0, 0.0, provenance)
    }

    pub fn failed(name: impl Into<String>, err: &LabError) -> Self {
        Self {
            name: name.into(),
            value: None,
            expected: f64::NAN,
            tolerance: 0.0,
            relation: Relation::Within,
            pass: false,
            provenance: "error".into(),
            error: Some(err.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub name: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub version: String,
    pub config: ExperimentConfig,
    pub checks: Vec<Check>,
    /// Campaign-specific summary (fits, tables).
    pub results: Value,
    pub data_files: Vec<String>,
    pub timing: Vec<Stage>,
    pub pass: bool,
}

impl RunReport {
    /// Everything except timing and output location, for reproducibility comparisons.
    pub fn values(&self) -> Value {
        json!({ "checks": self.checks, "results": self.results, "params": self.config.params, "seed": self.config.seed })
    }

    pub fn failed_checks(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

struct Run {
    seed: u64,
    data_dir: PathBuf,
    checks: Vec<Check>,
    results: serde_json::Map<String, Value>,
    files: Vec<String>,
    timing: Vec<Stage>,
}

impl Run {
    fn rng(&self, stream: u64) -> RngStream {
        RngStream::new(self.seed, stream)
    }

    fn push(&mut self, c: Check) {
        self.checks.push(c);
    }

    /// Records the checks produced by `f`, or one failed check named `name`.
    fn attempt(&mut self, name: &str, f: impl FnOnce(&mut Run) -> Result<()>) {
        let start = Instant::now();
        if let Err(e) = f(self) {
            self.checks.push(Check::failed(name, &e));
        }
        self.timing.push(Stage {
            name: name.to_string(),
            seconds: start.elapsed().as_secs_f64(),
        });
    }

    fn result(&mut self, key: &str, v: impl Serialize) -> Result<()> {
        self.results.insert(key.to_string(), serde_json::to_value(v)?);
        Ok(())
    }

    fn write_csv(&mut self, name: &str, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
        fs::create_dir_all(&self.data_dir)?;
        let file = format!("{name}.csv");
        let mut w = csv::Writer::from_path(self.data_dir.join(&file))?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(r.iter().map(|v| format!("{v:e}")))?;
        }
        w.flush()?;
        self.files.push(format!("data/{file}"));
        Ok(())
    }

    fn write_json(&mut self, name: &str, v: &impl Serialize) -> Result<()> {
        fs::create_dir_all(&self.data_dir)?;
        let file = format!("{name}.json");
        let mut w = BufWriter::new(File::create(self.data_dir.join(&file))?);
        serde_json::to_writer_pretty(&mut w, v)?;
        w.flush()?;
        self.files.push(format!("data/{file}"));
        Ok(())
    }
}

/// Runs the configured campaign and writes `report.json` into `cfg.output_dir`.
pub fn run_campaign(cfg: &ExperimentConfig) -> Result<RunReport> {
    cfg.validate()?;
    let mut run = Run {
        seed: cfg.seed,
        data_dir: cfg.output_dir.join("data"),
        checks: Vec::new(),
        results: serde_json::Map::new(),
        files: Vec::new(),
        timing: Vec::new(),
    };
    let outcome = with_workers(cfg.workers, || match &cfg.params {
        CampaignParams::VerifySamplers(p) => verify_samplers(p, &mut run),
        CampaignParams::MomentCheck(p) => moment_check(p, &mut run),
        CampaignParams::OuRate(p) => ou_rate(p, &mut run),
        CampaignParams::TvTheorem(p) => tv_theorem(p, &mut run),
        CampaignParams::PoissonRate(p) => poisson_rate(p, &mut run),
        CampaignParams::Constants(p) => constants(p, &mut run),
        CampaignParams::GradientProbe(p) => gradient_probe(p, &mut run),
    })?;
    if let Err(e) = outcome {
        run.checks.push(Check::failed("campaign", &e));
    }
    let report = RunReport {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        pass: run.checks.iter().all(|c| c.pass),
        checks: run.checks,
        results: Value::Object(run.results),
        data_files: run.files,
        timing: run.timing,
    };
    fs::create_dir_all(&cfg.output_dir)?;
    let mut w = BufWriter::new(File::create(cfg.output_dir.join("report.json"))?);
    serde_json::to_writer_pretty(&mut w, &report)?;
    w.flush()?;
    Ok(report)
}

fn expect_campaign(cfg: &ExperimentConfig, c: Campaign) -> Result<()> {
    if cfg.campaign != c {
        return Err(cfg_err(
            "campaign",
            format!("expected {}, got {}", c.name(), cfg.campaign.name()),
        ));
    }
    Ok(())
}

/// The `tv-theorem` campaign: paired Euler ensembles of the stable and
/// Brownian OU, their TV lower bounds and sample TV, and the fit against
/// `2 - alpha`. In one dimension the fitted TV is the conditional-Gaussian
/// estimate: given its subordinator increments, a subordinated Euler path of
/// the OU equation ends in a Gaussian, so the simulated law is a Gaussian
/// mixture whose TV to the Brownian Euler law is nearly noise-free.
pub fn tv_theorem_campaign(cfg: &ExperimentConfig) -> Result<RunReport> {
    expect_campaign(cfg, Campaign::TvTheorem)?;
    run_campaign(cfg)
}

/// The `gradient-probe` campaign: finite-difference gradients of `P_t h` for
/// a half-line indicator and their small-`t` blow-up exponent.
pub fn gradient_probe_campaign(cfg: &ExperimentConfig) -> Result<RunReport> {
    expect_campaign(cfg, Campaign::GradientProbe)?;
    run_campaign(cfg)
}

fn verify_samplers(p: &SamplerParams, run: &mut Run) -> Result<()> {
    let n = p.n;
    let cf_tol = 3.0 / (n as f64).sqrt();
    let mut rows = Vec::new();
    for (ia, &alpha) in p.alphas.iter().enumerate() {
        let ia = ia as u64;
        let seed = run.seed;
        run.attempt(&format!("stable-vector-cf alpha={alpha}"), |run| {
            let sv = SampleSet::stable_vector(alpha, 1.0, 1, n, seed, 100 + ia)?;
            let sym = SampleSet::sym_stable(StableSpec::new(alpha, 1.0)?, n, seed, 200 + ia)?;
            for &xi in &p.xis {
                let target = (-xi.abs().powf(alpha) / 2.0).exp();
                for (label, set) in [("stable-vector", &sv), ("sym-stable", &sym)] {
                    let est = empirical_char_fn(set, &[xi])?;
                    let diff = est.abs_diff(target, 0.0);
                    rows.push(vec![alpha, xi, est.re, est.im, target, diff]);
                    run.push(Check::at_most(
                        format!("{label}-cf alpha={alpha} xi={xi}"),
                        diff,
                        cf_tol,
                        "closed-form",
                    ));
                }
            }
            Ok(())
        });
        if alpha < 2.0 {
            run.attempt(&format!("subordinator-laplace alpha={alpha}"), |run| {
                let spec = SubordinatorSpec::new(alpha, 1.0)?;
                let s = SampleSet::subordinator(spec, n, seed, 300 + ia)?;
                for &r in &p.laplace_r {
                    let est = s.values().iter().map(|v| (-r * v).exp()).sum::<f64>() / n as f64;
                    run.push(Check::within(
                        format!("subordinator-laplace alpha={alpha} r={r}"),
                        est,
                        spec.laplace(r),
                        cf_tol,
                        "closed-form",
                    ));
                }
                Ok(())
            });
        }
        run.attempt(&format!("scaling-ks alpha={alpha}"), |run| {
            let t = p.scaling_t;
            let at_t = SampleSet::sym_stable(StableSpec::new(alpha, t)?, n, seed, 400 + ia)?;
            let unit = SampleSet::sym_stable(StableSpec::new(alpha, 1.0)?, n, seed, 500 + ia)?;
            let scaled: Vec<f64> = unit.values().iter().map(|v| v * t.powf(1.0 / alpha)).collect();
            let d = ks_two_sample(at_t.values(), &scaled);
            run.push(Check::at_most(
                format!("scaling-ks alpha={alpha}"),
                d,
                ks_critical(p.ks_level, n, Some(n)),
                "identity",
            ));
            Ok(())
        });
    }
    run.write_csv("sampler_cf", &["alpha", "xi", "re", "im", "target", "abs_diff"], &rows)
}

fn moment_check(p: &MomentParams, run: &mut Run) -> Result<()> {
    let mut rows = Vec::new();
    let seed = run.seed;
    for (ia, &alpha) in p.alphas.iter().enumerate() {
        for (it, &t) in p.times.iter().enumerate() {
            let stream = 1000 + (ia * p.times.len() + it) as u64;
            run.attempt(&format!("inverse-moment alpha={alpha} t={t}"), |run| {
                let s = SampleSet::subordinator(SubordinatorSpec::new(alpha, t)?, p.n, seed, stream)?;
                let inv: Vec<f64> = s.values().iter().map(|v| 1.0 / v).collect();
                let est = robust_mean(&inv, DEFAULT_BLOCKS)?;
                let target = s_inverse_moment(alpha, t)?;
                rows.push(vec![alpha, t, est, target, (est - target) / target]);
                run.push(Check::within(
                    format!("inverse-moment alpha={alpha} t={t}"),
                    est,
                    target,
                    p.rel_tol * target,
                    "closed-form",
                ));
                Ok(())
            });
        }
    }
    run.write_csv(
        "inverse_moment",
        &["alpha", "t", "estimate", "target", "rel_err"],
        &rows,
    )
}

fn ou_rate(p: &OuRateParams, run: &mut Run) -> Result<()> {
    let mut rows = Vec::new();
    run.attempt("exact-tv", |run| {
        let tv = exact_tv_curve(&p.alphas, &p.grid)?;
        let mut points = Vec::new();
        for (&alpha, &v) in p.alphas.iter().zip(&tv) {
            let lb = lb_curve(alpha)?;
            rows.push(vec![alpha, v, lb, v / (2.0 - alpha)]);
            points.push((alpha, v));
            run.push(Check::at_least(
                format!("exact-tv >= lb alpha={alpha}"),
                v,
                lb,
                "closed-form",
            ));
        }
        let fit = rate_fit(&points)?;
        run.push(Check::within("rate-slope", fit.slope, 1.0, p.slope_tol, "shape"));
        run.write_json("rate_fit", &fit)?;
        run.result("rate_fit", &fit)
    });
    run.attempt("lb-limit", |run| {
        let ratio = lb_curve(p.lb_alpha)? / (2.0 - p.lb_alpha);
        let limit = (-0.25f64).exp() / 8.0;
        run.push(Check::within(
            "lb-ratio-limit",
            ratio,
            limit,
            p.lb_rel_tol * limit,
            "closed-form",
        ));
        run.result(
            "lb_ratio",
            json!({ "alpha": p.lb_alpha, "ratio": ratio, "limit": limit }),
        )
    });
    run.write_csv("ou_rate", &["alpha", "tv_exact", "lb_curve", "ratio_to_eps"], &rows)
}

fn euler(dt: f64, driver: Driver) -> Result<EulerConfig> {
    EulerConfig::new(
        dt,
        match driver {
            Driver::Brownian => Scheme::Brownian,
            Driver::Stable { .. } => Scheme::Subordinated,
        },
    )
}

fn driver_for(alpha: f64) -> Driver {
    if alpha >= 2.0 {
        Driver::Brownian
    } else {
        Driver::Stable { alpha }
    }
}

fn tv_theorem(p: &TvParams, run: &mut Run) -> Result<()> {
    let drift = DriftField::ou(p.d)?;
    let x0 = vec![p.x0; p.d];
    // one stream for every ensemble: paths with equal index share their Gaussians
    let rng = run.rng(10);
    let brownian = run_ensemble(
        &drift,
        &euler(p.dt, Driver::Brownian)?,
        Driver::Brownian,
        &x0,
        p.t,
        p.n,
        &rng,
        None,
    )?;
    let xis: Vec<Vec<f64>> = p
        .xis
        .iter()
        .flat_map(|&xi| (0..p.d).map(move |j| (0..p.d).map(|k| if k == j { xi } else { 0.0 }).collect::<Vec<f64>>()))
        .collect();
    let mut rows = Vec::new();
    let mut lower = Vec::new();
    // conditional-Gaussian TV in d = 1, the characteristic-function bound otherwise
    let mut fitted = Vec::new();
    for &alpha in &p.alphas {
        let driver = Driver::Stable { alpha };
        run.attempt(&format!("tv alpha={alpha}"), |run| {
            let stable = run_ensemble(&drift, &euler(p.dt, driver)?, driver, &x0, p.t, p.n, &rng, None)?;
            let lb = tv_cf_lower_bound_paired(&stable.samples(), &brownian.samples(), &xis)?;
            run.push(Check::holds(
                format!("cf-bound in [0, 2] alpha={alpha}"),
                (0.0..=2.0).contains(&lb.value),
                "identity",
            ));
            lower.push((alpha, lb.value));
            if p.d > 1 {
                fitted.push((alpha, lb.value));
            }
            let mut row = vec![
                alpha,
                p.t,
                lb.value,
                lb.error_bound,
                f64::NAN,
                f64::NAN,
                f64::NAN,
                f64::NAN,
                f64::NAN,
            ];
            if p.d == 1 {
                let mix = subordinated_ou_mixture(alpha, 1.0, p.x0, p.t, p.dt, p.n, &rng)?;
                let var = brownian_ou_variance(1.0, p.t, p.dt);
                let cond = tv_mixture_gaussian(&mix, mix.mean, var, 30.0, 1200)?;
                run.push(Check::holds(
                    format!("conditional-tv in [0, 2] alpha={alpha}"),
                    (0.0..=2.0).contains(&cond.value),
                    "identity",
                ));
                row[7] = cond.value;
                row[8] = cond.error_bound;
                fitted.push((alpha, cond.value));
                let sample = tv_from_samples_1d(&stable.samples(), &brownian.samples(), default_bins(p.n))?;
                run.push(Check::holds(
                    format!("sample-tv in [0, 2] alpha={alpha}"),
                    (0.0..=2.0).contains(&sample.value),
                    "identity",
                ));
                row[4] = sample.value;
                row[5] = sample.error_bound;
                if p.compare_exact {
                    let exact = exact_tv_mu(alpha)?;
                    row[6] = exact;
                    run.push(Check::at_most(
                        format!("noise-floor alpha={alpha}"),
                        sample.error_bound,
                        p.noise_floor_max,
                        "monte-carlo",
                    ));
                    run.push(Check::within(
                        format!("sample-tv vs exact alpha={alpha}"),
                        sample.value,
                        exact,
                        sample.error_bound,
                        "closed-form",
                    ));
                    run.push(Check::within(
                        format!("conditional-tv vs exact alpha={alpha}"),
                        row[7],
                        exact,
                        3.0 * row[8] + 0.01 * exact,
                        "closed-form",
                    ));
                    run.push(Check::at_most(
                        format!("cf-bound <= exact alpha={alpha}"),
                        lb.value,
                        exact + lb.error_bound,
                        "closed-form",
                    ));
                }
            }
            rows.push(row);
            Ok(())
        });
    }
    lower.sort_by(|a, b| a.0.total_cmp(&b.0));
    fitted.sort_by(|a, b| a.0.total_cmp(&b.0));
    if lower.len() >= 2 {
        let decreasing = lower.windows(2).all(|w| w[1].1 < w[0].1) && fitted.windows(2).all(|w| w[1].1 < w[0].1);
        run.push(Check::holds("tv decreases as alpha -> 2", decreasing, "shape"));
    }
    if fitted.len() >= 3 {
        run.attempt("tv-slope", |run| {
            let fit = rate_fit(&fitted)?;
            run.push(Check::within("tv-slope", fit.slope, 1.0, p.slope_tol, "shape"));
            run.write_json("tv_rate_fit", &fit)?;
            run.result("rate_fit", &fit)
        });
    }
    run.write_csv(
        "tv_theorem",
        &[
            "alpha",
            "t",
            "cf_bound",
            "cf_error",
            "sample_tv",
            "noise_floor",
            "exact_tv",
            "conditional_tv",
            "conditional_error",
        ],
        &rows,
    )
}

fn poisson_rate(p: &PoissonParams, run: &mut Run) -> Result<()> {
    let drift = DriftField::ou(1)?;
    let opts = PoissonOptions {
        tol: p.tail_tol,
        ..Default::default()
    };
    let closed = p.h == Observable::Cos;
    let seed = run.seed;
    let solve = |alpha: f64, stream: u64| -> Result<(PoissonProblem, GridFunction)> {
        let mut prob = PoissonProblem::new(p.h.clone(), alpha, drift.clone(), None)?;
        if closed {
            let f = poisson_grid(&prob, &p.grid, &opts)?;
            return Ok((prob, f));
        }
        let mc = p.mc.expect("validated");
        if prob.exact_mu().is_none() {
            let driver = driver_for(alpha);
            let est = mu_h_estimate(
                &p.h,
                &drift,
                &euler(mc.dt, driver)?,
                driver,
                mc.t_max,
                mc.n,
                &RngStream::new(seed, stream + 1),
            )?;
            prob.mu_h = Some(est.estimate);
        }
        let mc_opts = PoissonOptions {
            t_max: Some(mc.t_max),
            quad_steps: mc.quad_steps,
            tol: p.tail_tol,
            ..Default::default()
        };
        let engine = Engine::Mc {
            n: mc.n,
            dt: mc.dt,
            seed: seed ^ stream,
        };
        let values = p
            .grid
            .nodes()
            .iter()
            .map(|&x| poisson_solution(&prob, x, &mc_opts, engine).map(|v| v.value))
            .collect::<Result<Vec<f64>>>()?;
        Ok((prob, GridFunction::linear_extended(p.grid, values)?))
    };
    let mut rows = Vec::new();
    let f2 = match solve(2.0, 2000) {
        Ok((prob, f2)) => {
            run.attempt("residual alpha=2", |run| {
                let res = poisson_residuals(&prob, &f2, p.brownian_window)?;
                let worst = res.iter().map(|r| r.1.abs()).fold(0.0, f64::max);
                if closed {
                    run.push(Check::at_most("residual alpha=2", worst, p.brownian_tol, "identity"));
                }
                Ok(())
            });
            push_rows(&mut rows, 2.0, &prob, &f2);
            Some(f2)
        }
        Err(e) => {
            run.push(Check::failed("solve alpha=2", &e));
            None
        }
    };
    let half_width = 0.5 * (p.grid.x_max - p.grid.x_min) * p.interior_fraction;
    let mut rates = Vec::new();
    for (ia, &alpha) in p.alphas.iter().enumerate() {
        run.attempt(&format!("solve alpha={alpha}"), |run| {
            let (prob, fa) = solve(alpha, 2002 + 2 * ia as u64)?;
            run.push(Check::holds(
                format!("c-lin membership alpha={alpha}"),
                lin_norm(&fa).is_finite(),
                "identity",
            ));
            if closed && alpha < 2.0 {
                let res = poisson_residuals(&prob, &fa, half_width)?;
                let worst = res.iter().map(|r| r.1.abs()).fold(0.0, f64::max);
                run.push(Check::at_most(
                    format!("residual alpha={alpha}"),
                    worst,
                    p.stable_tol,
                    "identity",
                ));
            }
            if let Some(f2) = &f2 {
                let diff = lin_norm_diff(&fa, f2)?;
                let eps = 2.0 - alpha;
                rates.push((alpha, diff, diff / (eps * (1.0 / eps).ln())));
            }
            push_rows(&mut rows, alpha, &prob, &fa);
            Ok(())
        });
    }
    rates.sort_by(|a, b| a.0.total_cmp(&b.0));
    if rates.len() >= 2 {
        let (lo, hi) = rates
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), r| (lo.min(r.2), hi.max(r.2)));
        run.push(Check::at_most("lin-rate spread", hi / lo, p.spread_max, "shape"));
        run.push(Check::holds(
            "lin-norm difference decreases as alpha -> 2",
            rates.windows(2).all(|w| w[1].1 < w[0].1),
            "shape",
        ));
        let table: Vec<Value> = rates
            .iter()
            .map(|r| json!({ "alpha": r.0, "lin_norm_diff": r.1, "ratio_to_eps_log": r.2 }))
            .collect();
        let summary = json!({ "points": table, "spread": hi / lo });
        run.write_json("lin_rate", &summary)?;
        run.result("lin_rate", summary)?;
    }
    run.write_csv("poisson", &["alpha", "x", "f_alpha", "residual"], &rows)
}

fn push_rows(rows: &mut Vec<Vec<f64>>, alpha: f64, prob: &PoissonProblem, f: &GridFunction) {
    let res = poisson_residuals(prob, f, f64::INFINITY).unwrap_or_default();
    let mut k = 0;
    for i in 0..f.grid.len() {
        let x = f.grid.x(i);
        let r = match res.get(k) {
            Some(&(rx, r)) if rx == x => {
                k += 1;
                r
            }
            _ => f64::NAN,
        };
        rows.push(vec![alpha, x, f.values[i], r]);
    }
}

fn constants(p: &ConstantsParams, run: &mut Run) -> Result<()> {
    let mut table = Vec::new();
    let mut rows = Vec::new();
    for &d in &p.dims {
        run.attempt(&format!("constants d={d}"), |run| {
            let mut reports = p
                .alphas
                .iter()
                .map(|&a| ConstantReport::compute(d, a))
                .collect::<Result<Vec<_>>>()?;
            reports.sort_by(|a, b| a.alpha.total_cmp(&b.alpha));
            if reports.len() >= 2 {
                let first = (reports[0].ratio - 1.0).abs();
                let last = (reports[reports.len() - 1].ratio - 1.0).abs();
                run.push(Check::holds(
                    format!("ratio -> 1 as alpha -> 2, d={d}"),
                    last < first,
                    "shape",
                ));
            }
            for r in &reports {
                rows.push(vec![
                    r.d as f64,
                    r.alpha,
                    r.a,
                    r.omega,
                    r.ratio,
                    r.tail_mass.unwrap_or(f64::NAN),
                ]);
            }
            table.extend(reports);
            Ok(())
        });
    }
    run.attempt("ratio-error-constant", |run| {
        let c = ratio_error_constant(&p.dims, &p.alphas)?;
        run.push(Check::holds("ratio-error-constant finite", c.is_finite(), "identity"));
        run.result("ratio_error_constant", c)
    });
    run.result("constants", &table)?;
    run.write_json("constants", &table)?;
    run.write_csv("constants", &["d", "alpha", "A", "omega", "ratio", "tail_mass"], &rows)
}

fn quartiles(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let q = |p: f64| v[((v.len() - 1) as f64 * p).round() as usize];
    q(0.75) - q(0.25)
}

fn gradient_probe(p: &GradientParams, run: &mut Run) -> Result<()> {
    let drift = DriftField::ou(1)?;
    let indicator = Observable::Indicator {
        lo: None,
        hi: Some(0.0),
    };
    let mut rows = Vec::new();
    for (ia, &alpha) in p.alphas.iter().enumerate() {
        let driver = driver_for(alpha);
        let mut points = Vec::new();
        let mut smooth_max = 0.0f64;
        for (it, &t) in p.times.iter().enumerate() {
            let rng = run.rng(3000 + (ia * p.times.len() + it) as u64);
            run.attempt(&format!("gradient alpha={alpha} t={t}"), |run| {
                let cfg = euler(t / p.steps_per_t as f64, driver)?;
                let ens = |x: f64, n: usize| -> Result<Ensemble> {
                    run_ensemble(&drift, &cfg, driver, &[x], t, n, &rng, None)
                };
                let pilot = ens(p.x, p.n.min(10_000))?;
                let delta = p.delta_frac * quartiles(&pilot.endpoints);
                let up = ens(p.x + delta, p.n)?;
                let down = ens(p.x - delta, p.n)?;
                let fd = |h: &dyn Fn(f64) -> f64| -> Vec<f64> {
                    up.endpoints
                        .iter()
                        .zip(&down.endpoints)
                        .map(|(a, b)| (h(*a) - h(*b)) / (2.0 * delta))
                        .collect()
                };
                let grad = mc_estimate(&fd(&|x| indicator.eval(x)), 1.0 / delta);
                let smooth = mc_estimate(&fd(&f64::cos), 1.0);
                let exact = if p.x == 0.0 {
                    indicator_gradient_at_zero(alpha, t)?
                } else {
                    f64::NAN
                };
                rows.push(vec![
                    alpha,
                    t,
                    delta,
                    grad.estimate,
                    grad.std_error,
                    exact,
                    smooth.estimate,
                ]);
                run.push(Check::at_least(
                    format!("signal alpha={alpha} t={t}"),
                    grad.estimate.abs(),
                    3.0 * grad.std_error,
                    "monte-carlo",
                ));
                if exact.is_finite() {
                    run.push(Check::within(
                        format!("gradient vs exact alpha={alpha} t={t}"),
                        grad.estimate,
                        exact,
                        4.0 * grad.std_error + 0.05 * exact.abs(),
                        "closed-form",
                    ));
                }
                points.push((t, grad.estimate.abs()));
                smooth_max = smooth_max.max(smooth.estimate.abs());
                Ok(())
            });
        }
        run.push(Check::at_most(
            format!("smooth-h gradient bound alpha={alpha}"),
            smooth_max,
            p.smooth_bound,
            "closed-form",
        ));
        run.attempt(&format!("exponent alpha={alpha}"), |run| {
            let fit = loglog_fit(&points)?;
            let (target, tol) = if alpha >= 2.0 {
                (-0.5, p.brownian_tol)
            } else {
                (-1.0 / alpha, p.stable_tol)
            };
            run.push(Check::within(
                format!("exponent alpha={alpha}"),
                fit.slope,
                target,
                tol,
                "shape",
            ));
            run.result(&format!("exponent_fit_alpha_{alpha}"), &fit)
        });
    }
    run.write_csv(
        "gradient",
        &[
            "alpha",
            "t",
            "delta",
            "gradient",
            "std_error",
            "exact",
            "smooth_gradient",
        ],
        &rows,
    )
}
