use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use weyl_semigroup_cli::config::{CommandKind, RunConfig, Suite};
use weyl_semigroup_cli::error::{CliError, EXIT_VIOLATION};
use weyl_semigroup_cli::{output, run_to_bytes, Rendered};

const WORKERS_ENV: &str = "WEYL_SEMIGROUP_WORKERS";

#[derive(Parser)]
#[command(name = "weyl-semigroup", version, about = "Monte Carlo Weyl symbols of heat semigroups")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// JSON config file, or an inline JSON object starting with '{'.
    #[arg(long)]
    config: String,
    /// Output JSON path; stdout if absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// CSV output path, for subcommands that produce a table.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Worker threads (default: $WEYL_SEMIGROUP_WORKERS, else all cores).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo estimates of u and its derivatives.
    Estimate(Common),
    /// Grid oracle for one or two sites.
    Oracle(Common),
    /// Run one verification suite.
    Verify {
        #[arg(value_enum)]
        suite: Suite,
        #[command(flatten)]
        common: Common,
    },
    /// Commutator trace sweep and √t scaling fit.
    Commutator(Common),
    /// Evaluate the derivative bound.
    Bound(Common),
    /// Gaussian absolute moments and the A_k, B_k constants.
    Moments(Common),
}

fn read_config(arg: &str) -> Result<String, CliError> {
    if arg.trim_start().starts_with('{') {
        Ok(arg.to_string())
    } else {
        std::fs::read_to_string(arg).map_err(|e| CliError::Config(format!("cannot read config '{arg}': {e}")))
    }
}

fn workers(flag: Option<usize>) -> Result<usize, CliError> {
    if let Some(n) = flag {
        return Ok(n);
    }
    match std::env::var(WORKERS_ENV) {
        Ok(s) => s.trim().parse().map_err(|_| CliError::Config(format!("{WORKERS_ENV}='{s}' is not a count"))),
        Err(_) => Ok(0),
    }
}

fn execute(cli: Cli) -> Result<bool, CliError> {
    let (kind, common, suite) = match cli.command {
        Command::Estimate(c) => (CommandKind::Estimate, c, None),
        Command::Oracle(c) => (CommandKind::Oracle, c, None),
        Command::Verify { suite, common } => (CommandKind::Verify, common, Some(suite)),
        Command::Commutator(c) => (CommandKind::Commutator, c, None),
        Command::Bound(c) => (CommandKind::Bound, c, None),
        Command::Moments(c) => (CommandKind::Moments, c, None),
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers(common.workers)?)
        .build_global()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let mut cfg = RunConfig::parse(kind, &read_config(&common.config)?)?;
    if let (RunConfig::Verify(v), Some(s)) = (&mut cfg, suite) {
        v.suite = Some(s);
    }
    let Rendered { json, csv, violation } = run_to_bytes(&cfg)?;
    match &common.out {
        Some(p) => output::write_atomic(p, &json)?,
        None => {
            use std::io::Write;
            std::io::stdout().write_all(&json)?;
        }
    }
    if let (Some(p), Some(bytes)) = (&common.csv, csv) {
        output::write_atomic(p, &bytes)?;
    }
    Ok(violation)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => {
            eprintln!("verification failed: at least one bound was violated");
            ExitCode::from(EXIT_VIOLATION as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
