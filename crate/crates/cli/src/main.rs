use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod output;

use commands::KernelArgs;
use config::RunConfig;

/// Errors surfaced to the shell. Configuration problems (unreadable or
/// inconsistent input) exit with 2, numerical failures (blow-up, quadrature
/// breakdown, unstable oracle) with 3.
#[derive(Debug)]
pub enum AppError {
    Config(String),
    Numerical(String),
}

impl AppError {
    fn exit_code(&self) -> u8 {
        match self {
            AppError::Config(_) => 2,
            AppError::Numerical(_) => 3,
        }
    }
}

impl fmt::Display for AppError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AppError::Config(msg) => write!(f, "configuration error: {msg}"),
            AppError::Numerical(msg) => write!(f, "numerical error: {msg}"),
        }
    }
}

#[derive(Parser)]
#[command(name = "delaywave", version, about = "Spectral solver for the wave equation with one constant time delay")]
struct Cli {
    /// Run configuration (TOML); defaults to delaywave.toml in the working directory
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Worker threads; DELAYWAVE_THREADS is honored when the flag is absent
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    /// Output directory, overriding the one in the configuration
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the configured problem; writes u.csv, v.csv and meta.json
    Solve,
    /// Run the finite-difference oracle; writes v_fd.csv
    Oracle,
    /// Compare the spectral solution against the oracle; writes compare.json
    Compare,
    /// Check mode-coefficient decay against the smoothness thresholds; writes decay.json
    Diagnose,
    /// Tabulate the fundamental delay kernels; writes kernels.csv
    Kernels {
        /// Instantaneous coefficient of the kernel equation y'' = a y + b y(t - tau)
        #[arg(long, allow_hyphen_values = true)]
        a: f64,
        /// Delayed coefficient
        #[arg(long, allow_hyphen_values = true)]
        b: f64,
        /// Delay
        #[arg(long)]
        tau: f64,
        /// Last tabulated time
        #[arg(long)]
        t_max: f64,
        /// Tabulation spacing
        #[arg(long)]
        dt: f64,
    },
}

fn resolve_threads(flag: Option<usize>) -> Result<Option<usize>, AppError> {
    if let Some(n) = flag {
        return Ok(Some(n));
    }
    match std::env::var("DELAYWAVE_THREADS") {
        Ok(s) => {
            let n: usize = s
                .trim()
                .parse()
                .map_err(|_| AppError::Config(format!("DELAYWAVE_THREADS is not a thread count: {s:?}")))?;
            Ok(Some(n))
        }
        Err(_) => Ok(None),
    }
}

fn run(cli: Cli) -> Result<(), AppError> {
    if let Some(n) = resolve_threads(cli.threads)? {
        if n == 0 {
            return Err(AppError::Config("thread count must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| AppError::Config(format!("cannot configure thread pool: {e}")))?;
    }

    if let Command::Kernels { a, b, tau, t_max, dt } = cli.command {
        let out_dir = cli.out.unwrap_or_else(|| PathBuf::from("out"));
        return commands::cmd_kernels(&KernelArgs { a, b, tau, t_max, dt }, &out_dir);
    }

    let path = cli.config.unwrap_or_else(|| PathBuf::from("delaywave.toml"));
    let cfg = RunConfig::load(&path)?;
    let out_dir = cli
        .out
        .unwrap_or_else(|| PathBuf::from(&cfg.output.directory));

    match cli.command {
        Command::Solve => commands::cmd_solve(&cfg, &out_dir),
        Command::Oracle => commands::cmd_oracle(&cfg, &out_dir),
        Command::Compare => commands::cmd_compare(&cfg, &out_dir),
        Command::Diagnose => commands::cmd_diagnose(&cfg, &out_dir),
        Command::Kernels { .. } => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
