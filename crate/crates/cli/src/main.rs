use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use stationary_lil_cli::{parse_config, run, CliError, Command};

#[derive(Parser)]
#[command(
    name = "slil",
    version,
    about = "Martingale approximation and LIL experiments for stationary processes"
)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
    /// Experiment config (INI-like key = value lines)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config's seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for the CSV and JSON outputs
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Worker threads; changes speed only
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Sub {
    /// β, γ and α tables
    Coeffs,
    /// b(t), its derivatives and asymptotic ratios
    Fourier,
    /// Summability conditions for a process
    Check,
    /// S = M + R along one path, with σ² estimates
    Decompose,
    /// LIL peaks
    Lil,
    /// Functional-LIL extremes along a ladder of horizons
    Flil,
    /// Conditional CLT distances
    Cclt,
    /// Growth of the remainder R
    Remainder,
}

impl From<Sub> for Command {
    fn from(s: Sub) -> Self {
        match s {
            Sub::Coeffs => Command::Coeffs,
            Sub::Fourier => Command::Fourier,
            Sub::Check => Command::Check,
            Sub::Decompose => Command::Decompose,
            Sub::Lil => Command::Lil,
            Sub::Flil => Command::Flil,
            Sub::Cclt => Command::Cclt,
            Sub::Remainder => Command::Remainder,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match go(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn go(cli: &Cli) -> Result<bool, Box<dyn std::error::Error>> {
    let path = cli.config.as_ref().ok_or("--config PATH is required")?;
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut cfg = parse_config(&text).map_err(CliError::Config)?;
    if let Some(s) = cli.seed {
        cfg.seed = Some(s);
    }
    if let Some(k) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(k).build_global()?;
    }
    let outcome = run(cli.command.into(), &cfg, &cli.out)?;
    Ok(outcome.pass)
}
