//! Command-line driver for the model-problem sweeps.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use aaotau::experiment::{self, ExperimentConfig};
use aaotau::gmres::SolverKind;
use aaotau::oracle;

#[derive(Parser)]
#[command(name = "aaotau", version, about = "All-at-once tau-preconditioned GMRES sweeps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the sweep described by a TOML config.
    Solve {
        #[arg(long)]
        config: PathBuf,
        /// CSV output path; overrides `output` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also run the dense spectral checks.
        #[arg(long)]
        checks: bool,
        /// Comma-separated subset of os, ts, i.
        #[arg(long, value_delimiter = ',')]
        solvers: Option<Vec<SolverKind>>,
        /// Cap on N*J for dense constructions in the checks.
        #[arg(long)]
        max_dense: Option<usize>,
    },
}

fn run(cli: Cli) -> aaotau::Result<ExitCode> {
    experiment::configure_threads()?;
    let Command::Solve {
        config,
        out,
        checks,
        solvers,
        max_dense,
    } = cli.command;
    let mut cfg = ExperimentConfig::load(&config)?;
    if let Some(out) = out {
        cfg.output = Some(out);
    }
    if let Some(solvers) = solvers {
        cfg.solvers = solvers;
    }
    if let Some(cap) = max_dense {
        cfg.max_dense = cap;
    }
    cfg.checks |= checks;
    cfg.validate()?;

    for m in &cfg.interior {
        println!("grid: M = {m} interior points per direction, mesh width 1/{}", m + 1);
    }
    let records = experiment::run_sweep(&cfg)?;
    print!("{}", experiment::render_table(&records));
    if let Some(path) = &cfg.output {
        println!("wrote {}", path.display());
    }

    let mut checks_ok = true;
    if cfg.checks {
        let outcomes = oracle::standard_checks(cfg.max_dense)?;
        for o in &outcomes {
            println!("{o}");
        }
        checks_ok = outcomes.iter().all(|o| o.passed);
    }
    if !checks_ok {
        eprintln!("error: spectral checks failed");
        return Ok(ExitCode::from(1));
    }
    if records.iter().all(|r| r.converged) {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(2))
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
