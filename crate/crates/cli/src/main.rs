use std::path::PathBuf;
use std::process::ExitCode;

use bandopt_cli::{run_oracle, run_simulate, run_solve, run_verify, CliError, RunConfig};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bandopt", version, about = "Optimal dividend bands with debit interest")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Override sim.seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override sim.n_paths
    #[arg(long, global = true)]
    paths: Option<u64>,
    /// Override sim.x0_list, comma separated
    #[arg(long, global = true, value_delimiter = ',', allow_negative_numbers = true)]
    x0: Option<Vec<f64>>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Solve and certify; writes grid.csv and bands.json
    Solve,
    /// Re-check a solve from its files; writes verify.json
    Verify,
    /// Monte Carlo estimates; writes sim.csv
    Simulate,
    /// Value-iteration reference; writes oracle.csv
    Oracle,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let path = cli
        .config
        .ok_or_else(|| CliError::Config("--config is required".into()))?;
    let mut cfg = RunConfig::load(&path)?;
    cfg.override_with(cli.seed, cli.paths, cli.x0);
    match cli.command {
        Command::Solve => run_solve(&cfg, &cli.out),
        Command::Verify => run_verify(&cfg, &cli.out),
        Command::Simulate => run_simulate(&cfg, &cli.out),
        Command::Oracle => run_oracle(&cfg, &cli.out),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("bandopt: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
