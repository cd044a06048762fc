use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fracmgrit::config::{Defaults, ExperimentConfig};
use fracmgrit::experiments::{self, Report, RunError};

#[derive(Parser)]
#[command(name = "fracmgrit", version, about = "MGRIT for unsteady spectral fractional diffusion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON experiment configuration; missing keys take per-experiment defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `outputs.dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed of the random MGRIT initial guess (overrides `mgrit.seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for the parameter sweeps.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// H1 errors, refinement ratios and solver iterations.
    ConvergenceTable,
    /// Spatial solver iterations over fractional orders and step sizes.
    RobustnessTable,
    /// Convergence bounds next to observed MGRIT convergence factors.
    Bounds,
    /// Eigenvalues of the trace operator pencil.
    Spectrum,
    /// Mesh and assembled matrices.
    Export,
}

fn run(cli: &Cli) -> Result<(Report, PathBuf), RunError> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::from_path(p)?,
        None => ExperimentConfig::default(),
    };
    if cli.seed.is_some() {
        cfg.mgrit.seed = cli.seed;
    }
    let defaults = match cli.command {
        Command::ConvergenceTable => Defaults::convergence(),
        Command::RobustnessTable => Defaults::robustness(),
        Command::Bounds | Command::Spectrum => Defaults::bounds(),
        Command::Export => Defaults::export(),
    };
    let settings = cfg.resolve(&defaults)?;
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.outputs.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    let report = match cli.command {
        Command::ConvergenceTable => experiments::convergence_table(&settings)?,
        Command::RobustnessTable => experiments::robustness_table(&settings)?,
        Command::Bounds => experiments::bounds(&settings)?,
        Command::Spectrum => experiments::spectrum_table(&settings)?,
        Command::Export => experiments::export(&settings)?,
    };
    report.write(&out)?;
    Ok((report, out))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(&cli) {
        Ok((report, out)) => {
            if report.nonconverged > 0 {
                eprintln!(
                    "{} run(s) did not converge; results written to {}",
                    report.nonconverged,
                    out.display()
                );
                return ExitCode::from(3);
            }
            println!("results written to {}", out.display());
            ExitCode::SUCCESS
        }
        Err(RunError::Config(e)) => {
            eprintln!("configuration error: {e}");
            ExitCode::from(2)
        }
        Err(RunError::Core(e @ fracmgrit_core::Error::InvalidParameter { .. })) => {
            eprintln!("configuration error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
