use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

use entlab::cli::{self, EngineChoice, Overrides, RunStatus, ScenarioConfig};
use entlab::lab::WSign;

#[derive(Parser)]
#[command(name = "entlab", version, about = "Entropy and curvature-dimension checks along Wasserstein geodesics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario config.
    Run {
        config: PathBuf,
        #[command(flatten)]
        flags: Flags,
    },
    /// Run every scenario listed in a manifest.
    Battery {
        manifest: PathBuf,
        #[command(flatten)]
        flags: Flags,
    },
    /// Re-render the summary of a run directory.
    Report { run_dir: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum SignArg {
    Minus,
    Plus,
}

#[derive(Args)]
struct Flags {
    #[arg(long)]
    grid_size: Option<usize>,
    #[arg(long)]
    time_samples: Option<usize>,
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long, value_enum)]
    engine: Option<EngineChoice>,
    #[arg(long, default_value = "runs")]
    out_dir: PathBuf,
    #[arg(long, value_enum)]
    w_sign: Option<SignArg>,
}

impl Flags {
    fn overrides(&self) -> Overrides {
        Overrides {
            grid_size: self.grid_size,
            time_samples: self.time_samples,
            tolerance: self.tolerance,
            engine: self.engine,
            w_sign: self.w_sign.map(|s| match s {
                SignArg::Minus => WSign::Minus,
                SignArg::Plus => WSign::Plus,
            }),
        }
    }
}

fn status(ok: bool) -> ExitCode {
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn main() -> anyhow::Result<ExitCode> {
    match Cli::parse().command {
        Command::Run { config, flags } => {
            let mut cfg = match ScenarioConfig::load(&config) {
                Ok(c) => c,
                Err(e) => {
                    let doc = serde_json::json!({ "status": "error", "config": config, "error": e.to_string() });
                    eprintln!("{}", serde_json::to_string_pretty(&doc)?);
                    return Ok(ExitCode::FAILURE);
                }
            };
            flags.overrides().apply(&mut cfg);
            let report = cli::run_scenario(&cfg, &flags.out_dir).context("writing run artifacts")?;
            let summary = cli::BatterySummary::from_reports(std::slice::from_ref(&report));
            print!("{}", summary.render());
            if report.status == RunStatus::Error {
                eprintln!("{}", serde_json::to_string_pretty(&serde_json::json!({ "status": "error", "scenario": report.name, "error": report.error }))?);
            }
            Ok(status(report.passed))
        }
        Command::Battery { manifest, flags } => {
            let summary = cli::run_battery(&manifest, &flags.overrides(), &flags.out_dir)
                .with_context(|| format!("running battery {}", manifest.display()))?;
            print!("{}", summary.render());
            Ok(status(summary.all_passed()))
        }
        Command::Report { run_dir } => {
            let summary = cli::report(&run_dir)?;
            print!("{}", summary.render());
            Ok(status(summary.all_passed()))
        }
    }
}
