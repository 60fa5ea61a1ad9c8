//! Command-line front end: configuration, commands, serialization and the
//! acceptance suite.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod tolerances;
pub mod verify;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use rislab_core::semigroup::CompositeKind;
use serde_json::json;

use crate::commands::Ctx;
use crate::config::{Format, RunConfig, BUNDLED_TOY};
use crate::error::CliError;
use crate::output::{jf, Output};

#[derive(Parser, Debug)]
#[command(name = "rislab", version, about = "Repeated interaction systems: fluxes, linear response and counting statistics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Run configuration (JSON). `verify` falls back to the bundled toy model.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Composite kind: cyclic, reversed_cyclic or random (overrides the config).
    #[arg(long, global = true)]
    pub kind: Option<String>,
    /// Output file (stdout when absent).
    #[arg(long, global = true)]
    pub out: Option<String>,
    /// csv or json (overrides the config).
    #[arg(long, global = true)]
    pub format: Option<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Sampling threads; 0 uses all cores.
    #[arg(long, global = true, default_value_t = 0)]
    pub workers: usize,
    /// Comma-separated grid: α values (cgf), hyperplane offsets (rate), MGF points (sample).
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub alpha: Option<String>,
    #[arg(long, global = true, default_value_t = 20)]
    pub steps: usize,
    #[arg(long, global = true, default_value_t = 1000)]
    pub trajectories: usize,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Invariant state and steady fluxes.
    Steady,
    /// KMS, ergodicity, time-reversal and non-entanglement checks.
    Assumptions,
    /// Kinetic coefficients by finite differences and Green-Kubo, with Onsager residuals.
    Kinetic,
    /// Large-time cumulant generating function on an α grid.
    Cgf,
    /// First and second moments of the entropy fluxes and the covariance.
    Moments,
    /// Rate function along the energy-conservation hyperplane.
    Rate,
    /// Two-time measurement trajectories.
    Sample,
    /// Acceptance suite; exits 0 iff every criterion passes.
    Verify,
}

fn parse_list(s: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| CliError::Usage(format!("--alpha: cannot parse '{t}'")))
        })
        .collect()
}

fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    match &cli.config {
        Some(p) => Ok(RunConfig::from_path(p)?),
        None if cli.command == Command::Verify => Ok(RunConfig::from_str(BUNDLED_TOY)?),
        None => Err(CliError::Usage("--config is required".into())),
    }
}

/// Runs one command and returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("rislab: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> Result<i32, CliError> {
    let cfg = load_config(cli)?;
    let format = match &cli.format {
        Some(f) => Format::parse(f).ok_or_else(|| CliError::Usage(format!("--format: unknown format '{f}'")))?,
        None => cfg.output.format,
    };
    let out_path = cli.out.clone().or_else(|| cfg.output.path.clone());
    if cli.command == Command::Verify {
        let results = verify::run_all(&cfg.tolerances);
        for r in &results {
            eprintln!("{}", r.line());
        }
        let passed = results.iter().all(|r| r.passed);
        let out = Output {
            table: verify::results_table(&results),
            json: json!({
                "passed": passed,
                "criteria": results.iter().map(|r| json!({
                    "criterion": r.id, "name": r.name, "passed": r.passed,
                    "measured": jf(r.measured), "tolerance": jf(r.tolerance),
                    "seconds": jf(r.seconds), "detail": r.detail,
                })).collect::<Vec<_>>(),
            }),
        };
        out.write(format, out_path.as_deref())?;
        return if passed {
            Ok(0)
        } else {
            Err(CliError::Verify(format!(
                "{} of {} criteria failed",
                results.iter().filter(|r| !r.passed).count(),
                results.len()
            )))
        };
    }
    let kind = match &cli.kind {
        Some(k) => CompositeKind::parse(k).ok_or_else(|| CliError::Usage(format!("--kind: unknown kind '{k}'")))?,
        None => cfg.kind,
    };
    let ctx = Ctx {
        model: cfg.build_model()?,
        kind,
        seed: cli.seed.unwrap_or(cfg.seed),
        workers: cli.workers,
        alpha: cli.alpha.as_deref().map(parse_list).transpose()?,
        steps: cli.steps,
        trajectories: cli.trajectories,
        tol: cfg.tolerances.clone(),
        cfg,
    };
    let out = match cli.command {
        Command::Steady => commands::steady(&ctx)?,
        Command::Assumptions => commands::assumptions(&ctx)?,
        Command::Kinetic => commands::kinetic(&ctx)?,
        Command::Cgf => commands::cgf(&ctx)?,
        Command::Moments => commands::moments(&ctx)?,
        Command::Rate => commands::rate(&ctx)?,
        Command::Sample => commands::sample(&ctx)?,
        Command::Verify => unreachable!("handled above"),
    };
    out.write(format, out_path.as_deref())?;
    Ok(0)
}
