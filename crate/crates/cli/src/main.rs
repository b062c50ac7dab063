//! `ltrisk` command-line front end.

mod commands;
mod config;
mod staging;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use ltrisk::IndexForm;
use serde_json::{json, Value};

use crate::commands::RiskRequest;
use crate::config::RunConfig;

#[derive(Parser)]
#[command(
    name = "ltrisk",
    version,
    about = "Long-term risk indices, extreme scenario generation and storage sizing"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

/// Flags shared by every subcommand; each overrides the config file.
#[derive(Args)]
struct Common {
    /// Run configuration (JSON).
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Master seed for fitting and generation.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory of this command.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Model bank cache directory.
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
    /// Worker threads (results do not depend on it).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true)]
    n_ext: Option<usize>,
    #[arg(long, global = true)]
    screen_interval: Option<usize>,
    #[arg(long, global = true)]
    candidates: Option<usize>,
    #[arg(long, global = true)]
    tilt: Option<f64>,
    /// Synchronous derating factor.
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Index window length in periods.
    #[arg(long, global = true)]
    sigma: Option<usize>,
    /// Shortage weight in the long-term index.
    #[arg(long, global = true)]
    theta: Option<f64>,
    #[arg(long, global = true, value_parser = parse_form)]
    form: Option<IndexForm>,
    /// Increase log verbosity (repeatable).
    #[arg(long, short, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand)]
enum Command {
    /// Fit and cache the transition model bank.
    FitBank,
    /// Generate extreme scenarios.
    Generate,
    /// Compute per-period risk indices for scenarios.
    Risk {
        /// Scenario CSV file (repeatable).
        #[arg(long = "scenario")]
        scenarios: Vec<PathBuf>,
        /// Historical scenario label from the dataset (repeatable).
        #[arg(long)]
        historical: Vec<String>,
        /// Every historical scenario in the dataset.
        #[arg(long)]
        all_historical: bool,
        /// Evaluate only the first N periods.
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// Size storage over the historical set plus top-k extreme scenarios.
    Size {
        /// Output directory of a `generate` run.
        #[arg(long)]
        run: Option<PathBuf>,
        /// Comma-separated k values.
        #[arg(long, value_delimiter = ',')]
        sweep: Option<Vec<usize>>,
        #[arg(long)]
        efficiency: Option<f64>,
    },
    /// Write tidy CSVs for plotting.
    ExportPlot {
        /// Output directory of a `generate` run.
        #[arg(long)]
        run: Option<PathBuf>,
        /// Include per-period risk of the historical scenarios.
        #[arg(long)]
        include_historical: bool,
    },
}

fn parse_form(s: &str) -> Result<IndexForm, String> {
    match s {
        "literal" => Ok(IndexForm::Literal),
        "tau_squared" => Ok(IndexForm::TauSquared),
        _ => Err(format!("unknown index form `{s}` (literal, tau_squared)")),
    }
}

fn load_config(c: &Common) -> Result<RunConfig> {
    let path = c.config.as_deref().context("--config is required")?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(v) = c.seed {
        cfg.set_seed(v);
    }
    if let Some(v) = &c.cache_dir {
        cfg.cache_dir = v.clone();
    }
    if let Some(v) = c.n_ext {
        cfg.generation.n_ext = v;
    }
    if let Some(v) = c.screen_interval {
        cfg.generation.screen_interval = v;
    }
    if let Some(v) = c.candidates {
        cfg.generation.n_candidates = v;
    }
    if let Some(v) = c.tilt {
        cfg.generation.tilt = v;
    }
    if let Some(v) = c.alpha {
        cfg.risk.alpha_sg = v;
    }
    if let Some(v) = c.sigma {
        cfg.risk.sigma = v;
    }
    if let Some(v) = c.theta {
        cfg.risk.theta = v;
    }
    if let Some(v) = c.form {
        cfg.risk.index_form = v;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<Value> {
    let mut cfg = load_config(&cli.common)?;
    let out = cli.common.out.clone();
    match cli.command {
        Command::FitBank => {
            cfg.validate()?;
            commands::fit_bank(&cfg)
        }
        Command::Generate => {
            if let Some(o) = out {
                cfg.output_dir = o;
            }
            cfg.validate()?;
            commands::generate(&cfg)
        }
        Command::Risk {
            scenarios,
            historical,
            all_historical,
            horizon,
        } => {
            cfg.validate()?;
            let out = out.unwrap_or_else(|| cfg.output_dir.join("risk"));
            let req = RiskRequest {
                scenario_files: scenarios,
                historical,
                all_historical,
                horizon,
            };
            commands::risk(&cfg, &req, &out)
        }
        Command::Size { run, sweep, efficiency } => {
            if let Some(e) = efficiency {
                cfg.sizing.efficiency = e;
            }
            if let Some(s) = sweep {
                cfg.sizing.sweep = s;
            }
            cfg.validate()?;
            let run = run.unwrap_or_else(|| cfg.output_dir.clone());
            let out = out.unwrap_or_else(|| run.clone());
            commands::size(&cfg, &run, &cfg.sizing.sweep, &out)
        }
        Command::ExportPlot {
            run,
            include_historical,
        } => {
            cfg.validate()?;
            let run = run.unwrap_or_else(|| cfg.output_dir.clone());
            let out = out.unwrap_or_else(|| run.join("plot"));
            commands::export_plot(&cfg, &run, &out, include_historical || cfg.exports.include_historical)
        }
    }
}

fn error_kind(e: &anyhow::Error) -> &'static str {
    for cause in e.chain() {
        if let Some(err) = cause.downcast_ref::<ltrisk::Error>() {
            return err.kind();
        }
        if cause.is::<serde_json::Error>() {
            return "json";
        }
        if cause.is::<std::io::Error>() {
            return "io";
        }
        if cause.is::<csv::Error>() {
            return "csv";
        }
    }
    "invalid_input"
}

fn report_error(kind: &str, message: &str) {
    eprintln!("{}", json!({ "status": "error", "kind": kind, "message": message }));
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            report_error("usage", e.to_string().trim());
            return ExitCode::from(2);
        }
    };
    let level = match cli.common.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.common.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(anyhow::Error::from)
            .and_then(|pool| pool.install(|| run(cli))),
        None => run(cli),
    };
    match result {
        Ok(mut summary) => {
            summary["status"] = json!("ok");
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            report_error(error_kind(&e), &format!("{e:#}"));
            ExitCode::FAILURE
        }
    }
}
