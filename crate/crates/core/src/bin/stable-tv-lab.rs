use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use stable_tv_lab::experiment::{run_campaign, Campaign, ExperimentConfig};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CampaignArg {
    VerifySamplers,
    MomentCheck,
    OuRate,
    TvTheorem,
    #[value(alias = "poisson")]
    PoissonRate,
    Constants,
    GradientProbe,
}

impl From<CampaignArg> for Campaign {
    fn from(c: CampaignArg) -> Self {
        match c {
            CampaignArg::VerifySamplers => Campaign::VerifySamplers,
            CampaignArg::MomentCheck => Campaign::MomentCheck,
            CampaignArg::OuRate => Campaign::OuRate,
            CampaignArg::TvTheorem => Campaign::TvTheorem,
            CampaignArg::PoissonRate => Campaign::PoissonRate,
            CampaignArg::Constants => Campaign::Constants,
            CampaignArg::GradientProbe => Campaign::GradientProbe,
        }
    }
}

/// Verification campaigns for SDEs driven by alpha-stable noise versus Brownian motion.
#[derive(Debug, Parser)]
#[command(version)]
struct Cli {
    campaign: CampaignArg,
    /// TOML config; omitted parameters take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed (and STABLE_TV_LAB_SEED).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for report.json and data/.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (also STABLE_TV_LAB_WORKERS); results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
}

fn run(cli: Cli) -> stable_tv_lab::Result<bool> {
    let campaign = Campaign::from(cli.campaign);
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::new(campaign, 0),
    };
    if cfg.campaign != campaign {
        return Err(stable_tv_lab::LabError::Config {
            path: "campaign".into(),
            message: format!(
                "config is for '{}', command asked for '{}'",
                cfg.campaign.name(),
                campaign.name()
            ),
        });
    }
    cfg.apply_env()?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(w) = cli.workers {
        cfg.workers = Some(w);
    }
    if let Some(out) = cli.out {
        cfg.output_dir = out;
    }
    cfg.validate()?;
    let report = run_campaign(&cfg)?;
    if campaign == Campaign::Constants {
        println!("{}", serde_json::to_string_pretty(&report.results["constants"])?);
    }
    for c in &report.checks {
        let value = c.value.map_or_else(|| "-".to_string(), |v| format!("{v:.6e}"));
        let status = if c.pass { "pass" } else { "FAIL" };
        match &c.error {
            Some(e) => eprintln!("{status}  {}  error: {e}", c.name),
            None => eprintln!(
                "{status}  {}  value {value}  expected {:.6e} ± {:.2e}",
                c.name, c.expected, c.tolerance
            ),
        }
    }
    eprintln!("report: {}", cfg.output_dir.join("report.json").display());
    Ok(report.pass)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
