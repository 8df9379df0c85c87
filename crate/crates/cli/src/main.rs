use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mimo_relay::experiment::{self, ExperimentError, SweepSpec};
use mimo_relay::verify;

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

/// Capacity sweeps for dual-hop MIMO amplify-and-forward relay networks
/// with MF, MF-ZF and MF-RZF relay beamforming under imperfect CSI.
#[derive(Debug, Parser)]
#[command(name = "mimo-relay", version)]
struct Cli {
    /// Master seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Monte-Carlo trials per cell (overrides the config).
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// CSV output path; standard output when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the sweep described by a TOML file.
    Sweep { config: PathBuf },
    /// Run a shipped figure preset (fig2 .. fig8).
    Preset { name: String },
    /// Run the quick lemma, moment, oracle and regularizer checks.
    Verify,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: cannot start {threads} worker threads: {e}");
            return ExitCode::from(EXIT_FAILURE);
        }
    }
    let spec = match &cli.command {
        Command::Sweep { config } => experiment::parse_config(config),
        Command::Preset { name } => experiment::preset(name),
        Command::Verify => return run_verify(cli.seed.unwrap_or(experiment::DEFAULT_SEED)),
    };
    match spec.and_then(|spec| apply_overrides(spec, &cli)) {
        Ok(spec) => run(&spec, cli.out.as_deref()),
        Err(e) => fail(&e),
    }
}

fn apply_overrides(mut spec: SweepSpec, cli: &Cli) -> Result<SweepSpec, ExperimentError> {
    if let Some(seed) = cli.seed {
        spec.master_seed = seed;
    }
    if let Some(trials) = cli.trials {
        spec.trials = trials;
    }
    spec.validate()?;
    Ok(spec)
}

fn fail(e: &ExperimentError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(if e.is_config_error() { EXIT_CONFIG } else { EXIT_FAILURE })
}

fn run(spec: &SweepSpec, out: Option<&std::path::Path>) -> ExitCode {
    let table = match experiment::run_sweep(spec) {
        Ok(t) => t,
        Err(e) => return fail(&e),
    };
    let written = match out {
        Some(path) => experiment::emit_csv(&table, path),
        None => table.to_csv().and_then(|bytes| {
            std::io::stdout()
                .write_all(&bytes)
                .map_err(|source| ExperimentError::Write {
                    path: PathBuf::from("<stdout>"),
                    source,
                })
        }),
    };
    if let Err(e) = written {
        return fail(&e);
    }
    let failed = table.rows.iter().filter(|r| r.ergodic.value().is_none()).count();
    if failed > 0 {
        eprintln!("warning: {failed} of {} cells failed (marked ERR)", table.rows.len());
    }
    if table.all_failed() {
        return ExitCode::from(EXIT_NUMERIC);
    }
    ExitCode::SUCCESS
}

fn run_verify(seed: u64) -> ExitCode {
    let checks = verify::run_checks(seed);
    for c in &checks {
        println!("{c}");
    }
    if checks.iter().all(|c| c.passed) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_FAILURE)
    }
}
