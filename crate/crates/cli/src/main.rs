use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{error::ErrorKind, Args, Parser, Subcommand};
use ekman_cli::{
    cmd_check, cmd_ekman, cmd_simulate, cmd_spectrum, cmd_verify, configure_threads, exit_code, Overrides,
    EXIT_VALIDATION,
};

/// Stability of the Ekman spiral in the hydrostatic primitive equations.
#[derive(Parser)]
#[command(name = "ekman", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (`section.key = value` lines).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
}

#[derive(Args)]
struct Tuning {
    /// Arnoldi propagation horizon (s).
    #[arg(long)]
    horizon: Option<f64>,
    /// Krylov subspace dimension (>= 2).
    #[arg(long)]
    krylov: Option<usize>,
    /// Ritz residual tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Seed for random initial data and the Arnoldi start vector.
    #[arg(long)]
    seed: Option<u64>,
}

impl Tuning {
    fn overrides(&self) -> Overrides {
        Overrides {
            horizon: self.horizon,
            krylov: self.krylov,
            tol: self.tol,
            seed: self.seed,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Print d, k1..k4, the derivative bound and the C_E < 1 verdict.
    Check {
        #[command(flatten)]
        common: Common,
    },
    /// Sample the spiral to CSV.
    Ekman {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 101)]
        samples: usize,
        #[arg(long, value_name = "PATH", default_value = "ekman.csv")]
        out: PathBuf,
    },
    /// Time-march the perturbation and write series, snapshots and manifest.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, visible_alias = "out", value_name = "PATH", default_value = "run")]
        out_dir: PathBuf,
        #[command(flatten)]
        tuning: Tuning,
    },
    /// Estimate the spectral bound of the linearization.
    Spectrum {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        tuning: Tuning,
    },
    /// Run the invariant suite on the configured grid.
    Verify {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        tuning: Tuning,
    },
}

fn run(cli: Cli) -> Result<u8> {
    configure_threads(std::env::var("PE_THREADS").ok().as_deref())?;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let code = match cli.command {
        Command::Check { common } => cmd_check(&common.config, &mut out)?,
        Command::Ekman { common, samples, out: path } => cmd_ekman(&common.config, samples, &path, &mut out)?,
        Command::Simulate { common, out_dir, tuning } => {
            cmd_simulate(&common.config, &out_dir, &tuning.overrides(), &mut out)?
        }
        Command::Spectrum { common, tuning } => cmd_spectrum(&common.config, &tuning.overrides(), &mut out)?,
        Command::Verify { common, tuning } => cmd_verify(&common.config, &tuning.overrides(), &mut out)?,
    };
    out.flush()?;
    Ok(code)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_VALIDATION,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
