//! Argument parsing and command dispatch for the `matsketch` binary.
//!
//! [`run`] returns the process exit code instead of exiting, so the commands
//! can be driven in-process from tests.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use matsketch::io::MatrixFormat;

mod commands;

pub use commands::rank5_matrix;

pub const EXIT_OK: i32 = 0;
/// `--strict` was given and some trial missed the error guarantee.
pub const EXIT_VIOLATION: i32 = 2;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_DATA: i32 = 65;
pub const EXIT_NOINPUT: i32 = 66;
pub const EXIT_SOFTWARE: i32 = 70;
pub const EXIT_IOERR: i32 = 74;

/// Caps the worker pool when set to a positive integer.
pub const THREADS_ENV: &str = "MATSKETCH_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("cannot read {}: {source}", path.display())]
    NoInput { path: PathBuf, source: std::io::Error },
    #[error("cannot write report: {0}")]
    Output(std::io::Error),
    #[error(transparent)]
    Core(#[from] matsketch::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use matsketch::Error as E;
        match self {
            Self::Usage(_) => EXIT_USAGE,
            Self::NoInput { .. } => EXIT_NOINPUT,
            Self::Output(_) => EXIT_IOERR,
            Self::Core(e) => match e {
                E::OutOfRange(_) | E::KTooLarge { .. } => EXIT_USAGE,
                E::Io(_) => EXIT_IOERR,
                E::ConvergenceFailure | E::NotReplayable | E::Json(_) => EXIT_SOFTWARE,
                _ => EXIT_DATA,
            },
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "matsketch", version, about = "Randomized matrix sampling experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Low-rank approximation from a sample of rows.
    ApproxSvd(ApproxArgs),
    /// Cut-norm or spectral-norm decay under random coordinate restriction.
    Decay(DecayArgs),
    /// Deviation of empirical second moments from their expectation.
    Lln(LlnArgs),
    /// Block-identity experiment: how often a sample misses a whole block.
    Optimality(OptimalityArgs),
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Report destination; printed to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InputArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, default_value = "auto")]
    pub format: MatrixFormat,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ApproxWitness {
    /// Built-in 2000x120 matrix with five singular values 10 and the rest 0.1.
    Rank5,
    BlockIdentity,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum StreamMode {
    None,
    OnePass,
    TwoPass,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("matrix").required(true).args(["input", "witness"])))]
pub struct ApproxArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, value_enum)]
    pub witness: Option<ApproxWitness>,
    /// Block count for the block-identity witness.
    #[arg(long, default_value_t = 64)]
    pub n: usize,
    /// Row count for the block-identity witness; defaults to 4n.
    #[arg(long)]
    pub m: Option<usize>,
    /// Target rank; defaults to 5 for files and rank5, n for block-identity.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value_t = 0.5)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 0.5)]
    pub delta: f64,
    #[arg(long = "c-const", default_value_t = 1.0)]
    pub c_const: f64,
    /// Sample size; overrides the formula.
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "none")]
    pub stream: StreamMode,
    #[arg(long, default_value_t = 1)]
    pub trials: usize,
    /// Exit with status 2 if any trial misses the error guarantee.
    #[arg(long)]
    pub strict: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormKind {
    Cut,
    Spectral,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DecayWitness {
    AllOnes,
    Identity,
    RandomSign,
    BlockIdentity,
    File,
}

#[derive(Debug, Args)]
pub struct DecayArgs {
    #[arg(long, value_enum)]
    pub norm: NormKind,
    /// Expected subset size.
    #[arg(long)]
    pub q: f64,
    #[arg(long, default_value_t = 500)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Defaults to `file` when --input is given.
    #[arg(long, value_enum)]
    pub witness: Option<DecayWitness>,
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, default_value_t = 16)]
    pub n: usize,
    /// Row count for the block-identity witness; defaults to 4n.
    #[arg(long)]
    pub m: Option<usize>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum EnsembleArg {
    ScaledBasis,
    MatrixRows,
}

#[derive(Debug, Args)]
pub struct LlnArgs {
    #[arg(long, value_enum)]
    pub ensemble: EnsembleArg,
    /// Dimension of the scaled basis.
    #[arg(long, default_value_t = 16)]
    pub n: usize,
    /// Matrix whose rows form the ensemble.
    #[command(flatten)]
    pub input: InputArgs,
    /// Samples per trial; defaults to 4·⌈n ln n⌉.
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long = "c-const", default_value_t = 1.0)]
    pub c_const: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct OptimalityArgs {
    #[arg(long, default_value_t = 64)]
    pub n: usize,
    /// Defaults to 4n.
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub d: usize,
    #[arg(long, default_value_t = 200)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n = raw
        .trim()
        .parse::<usize>()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got {raw:?}")))?;
    // The global pool can only be built once per process; later calls keep it.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Runs one command line and returns its exit code. Diagnostics go to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let outcome = configure_threads().and_then(|()| match cli.command {
        Command::ApproxSvd(a) => commands::approx_svd(a),
        Command::Decay(a) => commands::decay(a),
        Command::Lln(a) => commands::lln(a),
        Command::Optimality(a) => commands::optimality(a),
    });
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("matsketch: {e}");
            e.exit_code()
        }
    }
}
