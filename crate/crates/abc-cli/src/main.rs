//! `abc`: drive the torus-construction laboratory from the command line.
//!
//! Exit codes: 0 when every check passes, 1 when the run completed but at
//! least one check failed, 2 for configuration or environment errors that
//! prevented the checks from running at all.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use abc_core::config::RunConfig;
use abc_core::report::RunReport;
use abc_core::runner;
use abc_core::{AbcError, Result};

#[derive(Parser)]
#[command(
    name = "abc",
    version,
    about = "Exact and real-analytic checks for approximation-by-conjugation constructions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run all configured checks and write report, tables and figures.
    Run(ConfigArgs),
    /// Run the checks only; print verdicts, write nothing.
    Verify(ConfigArgs),
    /// Re-emit the SVG figures embedded in an existing report.
    Render(RenderArgs),
    /// Print the stage parameter table for a config.
    Params(ConfigArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// Path to the TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Use only the first N configured stages.
    #[arg(long)]
    stages: Option<usize>,
    /// Override the configured mode: exact, analytic or both.
    #[arg(long)]
    mode: Option<String>,
    /// Output directory (run only; overrides the config's `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the sampling seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct RenderArgs {
    /// Path to a report.json produced by `abc run`.
    #[arg(long)]
    report: PathBuf,
    /// Directory for the figures.
    #[arg(long)]
    out: PathBuf,
}

fn load_config(args: &ConfigArgs) -> Result<RunConfig> {
    let mut config = RunConfig::load(&args.config)?;
    if let Some(mode) = &args.mode {
        config.mode = mode.parse()?;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(n) = args.stages {
        if n == 0 || n > config.stages.len() {
            return Err(AbcError::Config(format!(
                "--stages {n} is outside 1..={}",
                config.stages.len()
            )));
        }
        config.stages.truncate(n);
    }
    // overrides may change which shape rules apply; re-check before compute
    config.schedule().map(|_| ())?;
    Ok(config)
}

fn print_verdicts(report: &RunReport) {
    for v in report.failed_checks() {
        println!("FAIL {}: {} {} {} ({})", v.id, v.lhs, v.relation, v.rhs, v.detail);
    }
    let passed = report.checks.iter().filter(|v| v.passed).count();
    println!(
        "checks: {passed}/{} passed, mode {}, seed {}",
        report.checks.len(),
        report.mode,
        report.seed
    );
}

fn exec(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run(args) => {
            let config = load_config(&args)?;
            let out = args
                .out
                .clone()
                .or_else(|| config.out.clone())
                .unwrap_or_else(|| PathBuf::from("abc-out"));
            let outcome = runner::run(&config, &out)?;
            print_verdicts(&outcome.report);
            println!("wrote {} artifacts to {}", outcome.written.len(), out.display());
            Ok(outcome.report.passed)
        }
        Command::Verify(args) => {
            let config = load_config(&args)?;
            let report = runner::verify(&config)?;
            print_verdicts(&report);
            Ok(report.passed)
        }
        Command::Render(args) => {
            let text = std::fs::read_to_string(&args.report).map_err(|e| {
                AbcError::Artifact(format!("cannot read {}: {e}", args.report.display()))
            })?;
            let report = RunReport::from_json(&text)?;
            let written = runner::render(&report, &args.out)?;
            for path in &written {
                println!("wrote {}", path.display());
            }
            if written.is_empty() {
                println!("report carries no figure data; nothing to render");
            }
            Ok(true)
        }
        Command::Params(args) => {
            let config = load_config(&args)?;
            print!("{}", runner::params_table(&config)?);
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match exec(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
