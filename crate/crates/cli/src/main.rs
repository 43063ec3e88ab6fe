use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use langevin_core::experiment::{
    run_analytic_sweep, run_design, run_mc_sweep, run_metadata, run_overdamped_check, run_spectrum,
    write_table, ExperimentConfig,
};
use langevin_core::Error;

/// Perturbed underdamped Langevin samplers: variance sweeps, optimal perturbations and
/// spectra.
#[derive(Parser, Debug)]
#[command(name = "langevin-perturb", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Experiment configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `[output] dir`; default `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; all cores when omitted.
    #[arg(long)]
    workers: Option<usize>,
    /// Base seed (overrides `[sweep] seed`).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Exact asymptotic variance over the (gamma, mu) grid.
    AnalyticSweep(Common),
    /// Monte Carlo estimator spread over the (gamma, mu) grid.
    McSweep(Common),
    /// Optimal J1, J2 for the configured observable.
    DesignJ(Common),
    /// Truncated generator spectrum at each grid point.
    Spectrum(Common),
    /// Coupled distance to the overdamped limit over the epsilon list.
    OverdampedCheck(Common),
    /// Diffusion-bridge preset; `--config` replaces the preset entirely.
    Bridge {
        #[command(flatten)]
        common: Common,
        /// Use dt = 1e-4, T = 100, N = 500 instead of the desk-scale settings.
        #[arg(long)]
        paper_scale: bool,
    },
}

enum Failure {
    Config(String),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Io(_) => Failure::Config(e.to_string()),
            other => Failure::Numerical(other.to_string()),
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::Config(format!("cannot write {}: {e}", path.display()))
}

fn load(common: &Common, fallback: Option<ExperimentConfig>) -> Result<(ExperimentConfig, PathBuf), Failure> {
    let mut cfg = match (&common.config, fallback) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Some(cfg)) => cfg,
        (None, None) => return Err(Failure::Config("--config is required".into())),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    let out = common
        .out
        .clone()
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    Ok((cfg, out))
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| io_failure(&path, e))
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::AnalyticSweep(common) => {
            let (cfg, out) = load(&common, None)?;
            let table = run_analytic_sweep(&cfg)?;
            write_table(&out, "analytic", &table)?;
            println!("wrote {} rows to {}", table.rows.len(), out.join("analytic.csv").display());
        }
        Command::McSweep(common) => {
            let (cfg, out) = load(&common, None)?;
            sweep(&cfg, &out, "mc", common.workers)?;
        }
        Command::Bridge { common, paper_scale } => {
            let (cfg, out) = load(&common, Some(ExperimentConfig::bridge_preset(paper_scale)))?;
            write(&out, "metadata.txt", &run_metadata(&cfg, paper_scale))?;
            sweep(&cfg, &out, "bridge", common.workers)?;
        }
        Command::DesignJ(common) => {
            let (cfg, out) = load(&common, None)?;
            let design = run_design(&cfg)?;
            write(&out, "design.csv", &design.to_csv())?;
            println!(
                "certificate residual {:e}; wrote {}",
                design.result.certificate_residual(),
                out.join("design.csv").display()
            );
        }
        Command::Spectrum(common) => {
            let (cfg, out) = load(&common, None)?;
            write(&out, "spectrum.csv", &run_spectrum(&cfg)?)?;
            println!("wrote {}", out.join("spectrum.csv").display());
        }
        Command::OverdampedCheck(common) => {
            let (cfg, out) = load(&common, None)?;
            let table = run_overdamped_check(&cfg, common.workers)?;
            write(&out, "overdamped.csv", &table.to_csv())?;
            println!(
                "non-increasing in {:.0}% of seeds; wrote {}",
                100.0 * table.monotone_fraction(),
                out.join("overdamped.csv").display()
            );
        }
    }
    Ok(())
}

fn sweep(cfg: &ExperimentConfig, out: &Path, stem: &str, workers: Option<usize>) -> Result<(), Failure> {
    let table = run_mc_sweep(cfg, workers)?;
    write_table(out, stem, &table)?;
    println!("wrote {} rows to {}", table.rows.len(), out.join(format!("{stem}.csv")).display());
    if table.any_failed() {
        return Err(Failure::Numerical("some trajectories diverged; see the status column".into()));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
