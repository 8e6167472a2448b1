//! Command-line harness for adaptive MCMC experiments: config loading, CSV
//! output and the `run`, `benchmark`, `mse-study` and `verify` commands.

pub mod commands;
pub mod config;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use commands::{Check, CliError, Context, VerifyArgs};

#[derive(Debug, Parser)]
#[command(name = "airmcmc", version, about = "Adaptive MCMC with increasingly rare adaptation")]
struct Cli {
    /// Directory for CSV output (overrides `output.dir`).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Master seed (overrides `run.seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for replications; 0 uses every core.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Suppress progress and summary output.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ConfigArg {
    #[arg(long, short)]
    config: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CheckArg {
    Drift,
    Minorization,
    Counterexample,
    Regeneration,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the configured chain and write trace and diagnostic tables.
    Run(ConfigArg),
    /// Time each schedule variant of the `[benchmark]` section.
    Benchmark(ConfigArg),
    /// Estimate the MSE of the ergodic average over replications and fit its rate.
    MseStudy(ConfigArg),
    /// Check drift, minorization or non-convergence on the four-state example.
    Verify {
        check: CheckArg,
        /// Target parameter, as a decimal or a fraction such as 1/10.
        #[arg(long, default_value = "1/10")]
        eps: String,
        /// Last stretch of the exact counterexample recursion (at most 6).
        #[arg(long, default_value_t = 5)]
        max_k: u32,
        /// Regeneration tours to simulate.
        #[arg(long, default_value_t = 100_000)]
        tours: u64,
        /// Kernel width used by the regeneration check.
        #[arg(long, default_value_t = 2)]
        width: u8,
        /// Minimum probe excess the counterexample check requires.
        #[arg(long, default_value_t = 0.0)]
        threshold: f64,
    },
}

fn load(path: &std::path::Path) -> Result<config::LoadedConfig, CliError> {
    Ok(config::load(path)?)
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let ctx = Context {
        out_dir: cli.out_dir,
        seed: cli.seed,
        threads: cli.threads,
        quiet: cli.quiet,
    };
    match cli.command {
        Command::Run(c) => commands::run(&load(&c.config)?, &ctx).map(drop),
        Command::Benchmark(c) => commands::benchmark(&load(&c.config)?, &ctx).map(drop),
        Command::MseStudy(c) => commands::mse_study(&load(&c.config)?, &ctx).map(drop),
        Command::Verify {
            check,
            eps,
            max_k,
            tours,
            width,
            threshold,
        } => {
            let check = match check {
                CheckArg::Drift => Check::Drift,
                CheckArg::Minorization => Check::Minorization,
                CheckArg::Counterexample => Check::Counterexample,
                CheckArg::Regeneration => Check::Regeneration,
            };
            let args = VerifyArgs {
                check,
                eps,
                max_k,
                tours,
                width,
                threshold,
            };
            commands::verify(&args, &ctx).map(drop)
        }
    }
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code: 0 success, 1 runtime failure, 2 config or usage
/// error, 3 failed verification.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
