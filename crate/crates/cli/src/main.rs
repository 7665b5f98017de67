use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fracspec::config::ExperimentConfig;

mod commands;
mod error;

use error::{CliError, CliResult};

#[derive(Parser, Debug)]
#[command(name = "fracspec", version, about = "Spectral-measure Gaussian process experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// TOML experiment file; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Ensemble seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for the global pool.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write spectrum.csv with columns n,lambda.
    Spectrum(Common),
    /// Write charfun.csv with the Fourier transform of the measure.
    Charfun(Common),
    /// Build X, sample an ensemble, write paths.csv and ensemble.csv.
    Simulate(Common),
    /// Run the invariant suite and write report.txt; exit 1 on any failure.
    Verify(Common),
    /// Print the default configuration as TOML.
    DefaultConfig,
}

fn load(common: &Common) -> CliResult<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p).map_err(|e| CliError::Usage(e.to_string()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = common.seed {
        cfg.ensemble.seed = seed;
    }
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        // only fails if the pool was already built, which cannot happen here
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> CliResult<bool> {
    match cli.command {
        Command::Spectrum(c) => commands::spectrum(&load(&c)?).map(|_| true),
        Command::Charfun(c) => commands::charfun(&load(&c)?).map(|_| true),
        Command::Simulate(c) => commands::simulate(&load(&c)?).map(|_| true),
        Command::Verify(c) => commands::verify(&load(&c)?),
        Command::DefaultConfig => {
            print!("{}", ExperimentConfig::default().to_toml_string()?);
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("fracspec: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
