//! Command-line driver: single runs, (k, alpha) sweeps, the
//! collaborative-filtering market, and the closed-form verification suite.
//! Progress goes to stderr; data only to files. Exit codes: 0 success,
//! 1 configuration error (including usage errors), 2 runtime error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use compete_core::config::{ExperimentConfig, TaskKind};
use compete_core::error::Error;
use compete_core::sweep::{default_out_dir, run_single, run_sweep};
use compete_core::verify::run_verification;

#[derive(Parser)]
#[command(name = "compete", version, about = "Simulations of competing predictors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment configuration file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; must not already exist.
    /// Defaults to $COMPETE_OUT_DIR, then ./results.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the config's rng_seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's replicate count.
    #[arg(long)]
    replicates: Option<usize>,
    /// Suppress progress output.
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// One competition run plus its matched baseline (first grid cell,
    /// replicate 0); writes a run.json summary.
    Run(ExperimentArgs),
    /// Full (k, alpha) x replicate sweep; writes manifest.json, raw.csv,
    /// and aggregate.csv atomically.
    Sweep(ExperimentArgs),
    /// Collaborative-filtering market sweep over grid.k.
    Cf(ExperimentArgs),
    /// Closed-form verification suite; writes verify.json.
    Verify {
        /// Output directory; must not already exist.
        /// Defaults to $COMPETE_OUT_DIR, then ./results.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Seed for the suite's Monte Carlo cross-checks.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Suppress progress output.
        #[arg(long)]
        quiet: bool,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            // Usage problems (unknown flag, missing argument) are
            // configuration errors.
            eprint!("{e}");
            return ExitCode::from(1);
        }
        Err(e) => {
            // --help / --version.
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::InvalidArgument(_) | Error::Precondition(_) => {
                    ExitCode::from(1)
                }
                _ => ExitCode::from(2),
            }
        }
    }
}

fn dispatch(command: Command) -> Result<(), Error> {
    match command {
        Command::Run(args) => {
            let (config, out) = load(&args)?;
            if !args.quiet {
                eprintln!("running single competition from {}", args.config.display());
            }
            let summary = run_single(&config)?;
            write_json(&out, "run.json", &summary)?;
            if !args.quiet {
                eprintln!("wrote {}", out.join("run.json").display());
            }
            Ok(())
        }
        Command::Sweep(args) => {
            let (config, out) = load(&args)?;
            if !args.quiet {
                eprintln!("sweeping {} from {}", grid_summary(&config), args.config.display());
            }
            let bundle = run_sweep(&config, Some(&out))?;
            if !args.quiet {
                eprintln!("wrote {} raw rows to {}", bundle.raw.len(), out.display());
            }
            Ok(())
        }
        Command::Cf(args) => {
            let (config, out) = load(&args)?;
            if config.task != TaskKind::Cf {
                return Err(Error::Config(format!(
                    "the cf subcommand needs task = \"cf\" in {}",
                    args.config.display()
                )));
            }
            if !args.quiet {
                eprintln!("cf market sweep over k = {:?}", config.grid.k);
            }
            let bundle = run_sweep(&config, Some(&out))?;
            if !args.quiet {
                eprintln!("wrote {} raw rows to {}", bundle.raw.len(), out.display());
            }
            Ok(())
        }
        Command::Verify { out, seed, quiet } => {
            let out = out.unwrap_or_else(default_out_dir);
            let report = run_verification(seed);
            write_json(&out, "verify.json", &report)?;
            if !quiet {
                for check in &report.checks {
                    eprintln!(
                        "{}: {}",
                        check.name,
                        if check.passed { "pass" } else { "FAIL" }
                    );
                }
                eprintln!("wrote {}", out.join("verify.json").display());
            }
            if !report.all_passed {
                return Err(Error::Precondition("verification checks failed".into()));
            }
            Ok(())
        }
    }
}

fn load(args: &ExperimentArgs) -> Result<(ExperimentConfig, PathBuf), Error> {
    let mut config = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.rng_seed = seed;
    }
    if let Some(replicates) = args.replicates {
        config.replicates = replicates;
        config.validate()?;
    }
    let out = args
        .out
        .clone()
        .or_else(|| config.out_dir.clone())
        .unwrap_or_else(default_out_dir);
    Ok((config, out))
}

fn grid_summary(config: &ExperimentConfig) -> String {
    format!(
        "{} k x {} alpha x {} replicates",
        config.grid.k.len(),
        config.grid.alpha.len(),
        config.replicates
    )
}

/// Creates `dir` if needed and writes `name` into it, refusing to clobber
/// an existing file.
fn write_json<T: serde::Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), Error> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    if path.exists() {
        return Err(Error::Config(format!("output file {} already exists", path.display())));
    }
    let file = std::fs::File::create(&path)?;
    serde_json::to_writer_pretty(file, value)
        .map_err(|e| Error::Config(format!("cannot serialize {name}: {e}")))?;
    Ok(())
}
