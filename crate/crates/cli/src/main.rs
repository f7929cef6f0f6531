//! `sdcorp` command-line front end.
//!
//! Exit codes: 0 success, 1 input error, 2 failed certificate or synthesis,
//! 3 simulation diverged (the partial trace is still written).

mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "sdcorp", version, about = "Sampled-data cooperative output regulation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evaluate the stability and regulation certificate.
    Certify(RunArgs),
    /// Synthesize gains and emit them with their certificate.
    Design(RunArgs),
    /// Run the hybrid closed loop and write traces and metrics.
    Simulate(RunArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Builtin {
    Example41,
    Microgrid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum K1Source {
    /// The gain shipped with the scenario.
    Paper,
    /// Unit-weight discrete LQR.
    Synthesize,
}

#[derive(Args, Debug, Clone)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["scenario", "config"])))]
pub struct RunArgs {
    /// Built-in scenario.
    #[arg(long, value_enum)]
    pub scenario: Option<Builtin>,
    /// Scenario file in the sectioned text format.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Simulation horizon in seconds.
    #[arg(short = 'T', long = "horizon")]
    pub horizon: Option<f64>,
    /// Dense-output points per sampling period.
    #[arg(long)]
    pub substeps: Option<usize>,
    /// Consensus step size (per-MG step sizes for the micro-grid).
    #[arg(long)]
    pub mu: Option<f64>,
    /// Sampling period (dispatch interval for the micro-grid).
    #[arg(long = "h")]
    pub h: Option<f64>,
    #[arg(long, value_enum)]
    pub k1: Option<K1Source>,
    /// Simulate even when the certificate fails.
    #[arg(long)]
    pub force: bool,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Certify(args) => run::certify(args),
        Command::Design(args) => run::design(args),
        Command::Simulate(args) => run::simulate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
