use std::path::PathBuf;
use std::process::ExitCode;

use clap::builder::PossibleValuesParser;
use clap::Parser;

use frame_langevin::cli::{exit_code, run};
use frame_langevin::config::{parse_config, EXPERIMENTS};

/// Inertial Langevin dynamics on manifolds and their small-mass limit.
#[derive(Parser, Debug)]
#[command(name = "frame-langevin", version)]
struct Args {
    /// Experiment to run.
    #[arg(value_parser = PossibleValuesParser::new(EXPERIMENTS))]
    experiment: String,
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; overrides the file.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override a configuration key, e.g. --set sim.dt=5e-4 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn main() -> ExitCode {
    let a = Args::parse();
    let cfg = match parse_config(a.config.as_deref(), Some(&a.experiment), a.seed, a.out.as_deref(), &a.set) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(&e) as u8);
        }
    };
    ExitCode::from(run(&cfg) as u8)
}
