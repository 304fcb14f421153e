//! `jang` — command-line driver for the Jang-equation mass pipeline.
//!
//! Each subcommand runs one stage (or, for `pipeline`, all of them) from a
//! JSON config and writes CSV/JSON artifacts plus a `manifest.json` into
//! the output directory. Runs are deterministic: the same config produces
//! bitwise-identical data files.
//!
//! Exit codes: 0 success, 1 stage failure (partial artifacts are kept),
//! 2 config or usage error.

mod config;
mod stages;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use serde_json::json;

use config::PipelineConfig;
use stages::StageContext;

#[derive(Parser)]
#[command(name = "jang", version, about = "Jang-equation mass pipeline")]
struct Cli {
    /// JSON config file (see the crate docs for the schema).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory; overrides `out` from the config. Default: `jang-out`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Upper bound on worker threads. Stages currently run sequentially on
    /// one thread; the bound is recorded in the manifest.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,

    /// Override the smallest regularization parameter: the solve schedule's
    /// τ values are rescaled so the final stage uses this value.
    #[arg(long, global = true)]
    tolerance: Option<f64>,

    /// Reserved; all computations are deterministic. Recorded in the
    /// manifest for forward compatibility.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Constraint sweep and mass vector of the initial data.
    Constraints,
    /// Barrier assembly and asymptotics fits.
    Barriers,
    /// Regularized Jang solves along the (R, τ) schedule.
    Solve,
    /// Induced graph geometry and ADM mass.
    Geometry,
    /// Conformal factor and mass-chain bookkeeping.
    Conformal,
    /// All stages in order.
    Pipeline,
    /// Grid/τ/radius refinement studies with measured orders.
    Convergence,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Constraints => "constraints",
            Command::Barriers => "barriers",
            Command::Solve => "solve",
            Command::Geometry => "geometry",
            Command::Conformal => "conformal",
            Command::Pipeline => "pipeline",
            Command::Convergence => "convergence",
        }
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, String> {
    let path = cli
        .config
        .as_ref()
        .ok_or("missing --config PATH (a JSON config file is required)")?;
    let text = fs::read_to_string(path)
        .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    let mut cfg = PipelineConfig::from_json(&text)?;
    if cli.jobs == 0 {
        return Err("--jobs must be at least 1".into());
    }
    if let Some(tol) = cli.tolerance {
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(format!("--tolerance must be positive, got {tol}"));
        }
        let last = cfg.solve.schedule.last().expect("validated nonempty").1;
        let factor = tol / last;
        for stage in &mut cfg.solve.schedule {
            stage.1 *= factor;
        }
        cfg.validate()
            .map_err(|e| format!("config invalid after --tolerance rescale: {e}"))?;
    }
    Ok(cfg)
}

fn run(cli: &Cli, cfg: &PipelineConfig) -> Result<()> {
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.out.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("jang-out"));
    let ctx = StageContext::new(cfg, &out)?;

    let stages: &[fn(&StageContext) -> Result<Vec<String>>] = match cli.command {
        Command::Constraints => &[stages::run_constraints],
        Command::Barriers => &[stages::run_barriers],
        Command::Solve => &[stages::run_solve],
        Command::Geometry => &[stages::run_geometry],
        Command::Conformal => &[stages::run_conformal],
        Command::Convergence => &[stages::run_convergence],
        Command::Pipeline => &[
            stages::run_constraints,
            stages::run_barriers,
            stages::run_solve,
            stages::run_geometry,
            stages::run_conformal,
        ],
    };

    let mut artifacts = Vec::new();
    for stage in stages {
        artifacts.extend(stage(&ctx)?);
    }

    for name in &artifacts {
        let path = out.join(name);
        if !path.is_file() {
            anyhow::bail!("manifest lists {} but the file is missing", path.display());
        }
    }
    let manifest = json!({
        "command": cli.command.name(),
        "config_hash": cfg.hash(),
        "versions": {
            "jang-cli": env!("CARGO_PKG_VERSION"),
            "jang-core": jang_core::VERSION,
        },
        "jobs": cli.jobs,
        "seed": cli.seed,
        "config": cfg,
        "artifacts": artifacts,
    });
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(out.join("manifest.json"), text)?;
    println!(
        "{}: wrote {} artifact(s) to {}",
        cli.command.name(),
        manifest["artifacts"].as_array().map_or(0, |a| a.len()),
        out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match load_config(&cli) {
        Ok(cfg) => cfg,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };
    match run(&cli, &cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
