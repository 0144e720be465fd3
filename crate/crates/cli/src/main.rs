//! `noda`: run the Noda-type eigensolvers on Matrix Market files or
//! generated test matrices.
//!
//! Exit codes: 0 converged with positive iterates, 2 no convergence,
//! 3 invalid input or options, 4 positivity violated, 1 anything else
//! (including a failed `verify` signature check).

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use noda_core::{Algorithm, InnerMethod, ProblemMode, StartVector};

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_NO_CONVERGENCE: u8 = 2;
pub const EXIT_VALIDATION: u8 = 3;
pub const EXIT_POSITIVITY: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "noda", version, about = "Positivity-preserving Noda iterations for Perron and M-matrix eigenpairs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one algorithm and print the final eigenpair summary.
    Solve(SolveArgs),
    /// Run NI, INI_1 (γ=0.8), INI_1 (γ=0.1), INI_2 and the power method and
    /// print a comparison table.
    Compare(CommonArgs),
    /// Run one algorithm against a dense reference and check its convergence
    /// signature.
    Verify(VerifyArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    /// Perron pair of a nonnegative matrix.
    Nonneg,
    /// Smallest pair of an M-matrix.
    Mmatrix,
}

impl From<Mode> for ProblemMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Nonneg => ProblemMode::Perron,
            Mode::Mmatrix => ProblemMode::MSmallest,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Algo {
    Ni,
    Ini1,
    Ini2,
    Power,
}

impl From<Algo> for Algorithm {
    fn from(a: Algo) -> Self {
        match a {
            Algo::Ni => Algorithm::Ni,
            Algo::Ini1 => Algorithm::Ini1,
            Algo::Ini2 => Algorithm::Ini2,
            Algo::Power => Algorithm::Power,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Inner {
    Auto,
    Cg,
    Bicgstab,
    Direct,
}

impl From<Inner> for InnerMethod {
    fn from(i: Inner) -> Self {
        match i {
            Inner::Auto => InnerMethod::Auto,
            Inner::Cg => InnerMethod::Cg,
            Inner::Bicgstab => InnerMethod::BiCgStab,
            Inner::Direct => InnerMethod::Direct,
        }
    }
}

/// Options shared by every subcommand.
#[derive(Args, Debug, Clone)]
pub struct CommonArgs {
    /// Matrix Market file, or `gen:<spec>` (e.g. `gen:laplacian1d:50`,
    /// `gen:random:200:0.01:7`, `gen:fibonacci`).
    #[arg(long)]
    pub matrix: String,
    #[arg(long, value_enum, default_value_t = Mode::Nonneg)]
    pub mode: Mode,
    /// INI tolerance factor, in (0, 1).
    #[arg(long, default_value_t = 0.8)]
    pub gamma: f64,
    /// Outer stop on the scaled residual.
    #[arg(long, default_value_t = 1e-13)]
    pub tol: f64,
    #[arg(long, default_value_t = 100)]
    pub max_outer: usize,
    /// Inner iteration cap per solve [default: 10·n].
    #[arg(long)]
    pub inner_cap: Option<usize>,
    #[arg(long, value_enum, default_value_t = Inner::Auto)]
    pub inner: Inner,
    /// Shift for `σI − A` when the power method runs on an M-matrix
    /// [default: 1.05 · largest diagonal entry].
    #[arg(long)]
    pub sigma: Option<f64>,
    /// `uniform` or `random:<seed>` (ChaCha8 seeded with the u64 seed).
    #[arg(long, default_value = "uniform", value_parser = parse_x0)]
    pub x0: StartVector<f64>,
    /// Single-threaded products and no wall time in JSON histories, so
    /// repeated runs write byte-identical files.
    #[arg(long)]
    pub deterministic: bool,
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_enum, default_value_t = Algo::Ini1)]
    pub algo: Algo,
    /// Write the per-iteration history; `.json` selects JSON, anything else CSV.
    #[arg(long)]
    pub history: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_enum, default_value_t = Algo::Ini1)]
    pub algo: Algo,
    /// Largest dimension accepted for the dense reference.
    #[arg(long, default_value_t = noda_core::diagnostics::DEFAULT_ORACLE_CAP)]
    pub oracle_cap: usize,
}

fn parse_x0(s: &str) -> Result<StartVector<f64>, String> {
    if s == "uniform" {
        return Ok(StartVector::Uniform);
    }
    match s.strip_prefix("random:").map(str::parse::<u64>) {
        Some(Ok(seed)) => Ok(StartVector::Random(seed)),
        _ => Err(format!("expected 'uniform' or 'random:<seed>', got '{s}'")),
    }
}

fn configure_threads() -> Result<(), String> {
    let threads = match std::env::var("NODA_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&t| t >= 1)
            .ok_or_else(|| format!("NODA_THREADS must be a positive integer, got '{v}'"))?,
        Err(_) => 1,
    };
    noda_core::sparse::set_matvec_threads(threads);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK });
        }
    };
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(EXIT_VALIDATION);
    }
    let outcome = match cli.command {
        Command::Solve(args) => commands::solve(&args),
        Command::Compare(args) => commands::compare(&args),
        Command::Verify(args) => commands::verify(&args),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(failure) => {
            eprintln!("error: {failure}");
            ExitCode::from(failure.exit_code())
        }
    }
}
