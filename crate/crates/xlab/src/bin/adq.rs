use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use adq_xlab::{
    parse_config_file, parse_override, run_experiment, ExperimentSpec, Result, RunError,
    EXPERIMENTS,
};

/// Runs one named experiment and writes its tables and summary under
/// the output directory.
#[derive(Parser)]
#[command(name = "adq", version, about, long_about = None)]
struct Cli {
    /// Experiment to run.
    #[arg(value_name = "EXPERIMENT", help = experiment_help())]
    experiment: String,
    /// Parameter override, repeatable; wins over the config file.
    #[arg(long = "param", value_name = "KEY=VALUE")]
    params: Vec<String>,
    /// Optional key=value file of parameter defaults.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Root seed; every random draw derives from it.
    #[arg(long)]
    seed: u64,
    /// Directory the experiment subdirectory is created in.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

fn experiment_help() -> String {
    format!("Experiment to run: one of {}", EXPERIMENTS.join(", "))
}

fn run(cli: Cli) -> Result<PathBuf> {
    let mut overrides = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| {
                RunError::Usage(format!("cannot read config {}: {e}", path.display()))
            })?;
            parse_config_file(&text)?
        }
        None => Default::default(),
    };
    for pair in &cli.params {
        let (k, v) = parse_override(pair)?;
        overrides.insert(k, v);
    }
    run_experiment(&ExperimentSpec {
        name: cli.experiment,
        overrides,
        seed: cli.seed,
        out_dir: cli.out,
    })
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(dir) => {
            println!("wrote {}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("adq: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
