use std::path::{Path, PathBuf};

use clap::ValueEnum;
use matsketch::cut::{witness_all_ones, witness_identity, witness_random_sign};
use matsketch::io::{open_row_stream, read_matrix, MatrixFormat};
use matsketch::linalg::matrix_with_singular_values;
use matsketch::report::{records, ExperimentReport, Provenance, ReportBuilder};
use matsketch::rng::trial_seed;
use matsketch::stream::{MatrixRowStream, RowStream};
use matsketch::{
    block_identity_matrix, cut_decay_estimate, lln_deviation, low_rank_approximate, optimality_experiment,
    spectral_decay_estimate, ApproxConfig, ApproxReport, DenseMatrix, Source, VectorEnsemble,
};
use rayon::prelude::*;
use serde_json::{json, Map};

use crate::{
    ApproxArgs, ApproxWitness, CliError, DecayArgs, DecayWitness, EnsembleArg, InputArgs, LlnArgs, NormKind,
    OptimalityArgs, OutputArgs, StreamMode, EXIT_OK, EXIT_VIOLATION,
};

const RANK5_SEED: u64 = 5;

/// The built-in `rank5` witness: 2000x120 with singular values
/// `(10, 10, 10, 10, 10, 0.1, ..., 0.1)` and fixed random singular vectors.
pub fn rank5_matrix() -> DenseMatrix {
    let mut sigma = vec![10.0; 5];
    sigma.resize(120, 0.1);
    matrix_with_singular_values(2000, 120, &sigma, RANK5_SEED).expect("valid fixed shape")
}

fn name<E: ValueEnum>(value: E) -> String {
    value.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default()
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn readable(path: &Path) -> Result<(), CliError> {
    std::fs::File::open(path).map(drop).map_err(|source| CliError::NoInput { path: path.to_path_buf(), source })
}

fn load(input: &InputArgs) -> Result<(DenseMatrix, Provenance), CliError> {
    let path = input.input.as_deref().ok_or_else(|| usage("--input is required"))?;
    readable(path)?;
    Ok((read_matrix(path, input.format)?, Provenance::file(path)?))
}

fn block_identity(n: usize, m: Option<usize>) -> Result<(DenseMatrix, String), CliError> {
    let m = m.unwrap_or(4 * n);
    let a = block_identity_matrix(n, m).map_err(|e| usage(e.to_string()))?;
    Ok((a, format!("block-identity n={n} m={m}")))
}

fn check_trials(trials: usize) -> Result<(), CliError> {
    if trials == 0 {
        return Err(usage("--trials must be at least 1"));
    }
    Ok(())
}

fn emit(report: &ExperimentReport, output: &OutputArgs) -> Result<(), CliError> {
    let written = match &output.out {
        Some(path) => report.write(path),
        None => serde_json::to_string_pretty(report).map(|s| println!("{s}")).map_err(Into::into),
    };
    written.map_err(|e| match e {
        matsketch::Error::Io(io) => CliError::Output(io),
        other => other.into(),
    })
}

enum Matrix {
    Memory(DenseMatrix),
    File(PathBuf),
}

impl Matrix {
    fn stream(&self, format: MatrixFormat) -> Result<Box<dyn RowStream + '_>, CliError> {
        Ok(match self {
            Self::Memory(a) => Box::new(MatrixRowStream::new(a)),
            Self::File(path) => open_row_stream(path, format)?,
        })
    }
}

pub fn approx_svd(args: ApproxArgs) -> Result<i32, CliError> {
    check_trials(args.trials)?;
    let (matrix, provenance, default_k) = match (args.witness, &args.input.input) {
        (Some(ApproxWitness::Rank5), _) => (Matrix::Memory(rank5_matrix()), Provenance::generated("rank5"), Some(5)),
        (Some(ApproxWitness::BlockIdentity), _) => {
            let (a, label) = block_identity(args.n, args.m)?;
            (Matrix::Memory(a), Provenance::generated(label), Some(args.n))
        }
        (None, Some(path)) => {
            readable(path)?;
            let provenance = Provenance::file(path)?;
            let matrix = match args.stream {
                StreamMode::None => Matrix::Memory(read_matrix(path, args.input.format)?),
                _ => Matrix::File(path.clone()),
            };
            (matrix, provenance, None)
        }
        (None, None) => return Err(usage("one of --input or --witness is required")),
    };
    let format = args.input.format;
    let ncols = match &matrix {
        Matrix::Memory(a) => a.ncols(),
        Matrix::File(_) => matrix.stream(format)?.ncols(),
    };
    let k = args.k.or(default_k).unwrap_or(5.min(ncols));
    let config = |t: usize| ApproxConfig {
        k,
        epsilon: args.epsilon,
        delta: args.delta,
        c_constant: args.c_const,
        d: args.d,
        seed: trial_seed(args.seed, t),
    };

    let mut builder = ReportBuilder::new("approx-svd", provenance);
    builder
        .set("k", k)?
        .set("epsilon", args.epsilon)?
        .set("delta", args.delta)?
        .set("c_const", args.c_const)?
        .set("d", args.d)?
        .set("seed", args.seed)?
        .set("stream", name(args.stream))?
        .set("trials", args.trials)?
        .set("strict", args.strict)?
        .set("witness", args.witness.map(name))?
        .set("format", args.input.format)?;

    let reports: Vec<ApproxReport> = match (&matrix, args.stream) {
        (Matrix::Memory(a), StreamMode::None) => (0..args.trials)
            .into_par_iter()
            .map(|t| low_rank_approximate(Source::Matrix(a), &config(t)).map(|o| o.report))
            .collect::<Result<_, _>>()?,
        (_, mode) => {
            let mut out = Vec::with_capacity(args.trials);
            for t in 0..args.trials {
                let mut stream = matrix.stream(format)?;
                let source = match mode {
                    StreamMode::TwoPass => Source::TwoPass(stream.as_mut()),
                    _ => Source::OnePass(stream.as_mut()),
                };
                out.push(low_rank_approximate(source, &config(t))?.report);
            }
            out
        }
    };

    let violations = reports.iter().filter(|r| r.satisfied == Some(false)).count();
    let judged = reports.iter().filter(|r| r.satisfied.is_some()).count();
    let result = json!({
        "trials": args.trials,
        "k": k,
        "d": reports[0].d,
        "numerical_rank": reports[0].numerical_rank,
        "satisfied_fraction": (judged > 0).then(|| (judged - violations) as f64 / judged as f64),
        "violations": violations,
    });
    let report = builder.finish(records(&reports)?, result)?;
    emit(&report, &args.output)?;
    Ok(if args.strict && violations > 0 { EXIT_VIOLATION } else { EXIT_OK })
}

pub fn decay(args: DecayArgs) -> Result<i32, CliError> {
    check_trials(args.trials)?;
    let witness = match (args.witness, &args.input.input) {
        (Some(w), _) => w,
        (None, Some(_)) => DecayWitness::File,
        (None, None) => return Err(usage("one of --witness or --input is required")),
    };
    let n = args.n;
    let (a, provenance) = match witness {
        DecayWitness::AllOnes => (witness_all_ones(n), Provenance::generated(format!("all-ones n={n}"))),
        DecayWitness::Identity => (witness_identity(n), Provenance::generated(format!("identity n={n}"))),
        DecayWitness::RandomSign => (
            witness_random_sign(n, args.seed),
            Provenance::generated(format!("random-sign n={n} seed={}", args.seed)),
        ),
        DecayWitness::BlockIdentity => {
            let (a, label) = block_identity(n, args.m)?;
            (a, Provenance::generated(label))
        }
        DecayWitness::File => load(&args.input)?,
    };

    let mut builder = ReportBuilder::new("decay", provenance);
    builder
        .set("norm", args.norm)?
        .set("q", args.q)?
        .set("trials", args.trials)?
        .set("seed", args.seed)?
        .set("witness", name(witness))?
        .set("n", n)?
        .set("m", args.m)?
        .set("format", args.input.format)?;

    let est = match args.norm {
        NormKind::Cut => cut_decay_estimate(&a, args.q, args.trials, args.seed)?,
        NormKind::Spectral => spectral_decay_estimate(&a, args.q, args.trials, args.seed)?,
    };
    let per_trial = est
        .samples
        .iter()
        .zip(&est.subset_sizes)
        .map(|(v, s)| {
            let mut row = Map::new();
            row.insert("subset_size".into(), json!(s));
            row.insert("value".into(), json!(v));
            row
        })
        .collect();
    let result = json!({
        "norm": args.norm,
        "rows": a.nrows(),
        "cols": a.ncols(),
        "q": est.q,
        "trials": est.trials,
        "mean": est.mean,
        "standard_error": est.standard_error(),
        "bound_terms": est.bound_terms,
        "fitted_constant": est.fitted_constant,
    });
    emit(&builder.finish(per_trial, result)?, &args.output)?;
    Ok(EXIT_OK)
}

/// `4·⌈n·ln max(n, e)⌉`.
fn default_lln_samples(n: usize) -> usize {
    4 * (n as f64 * (n as f64).max(std::f64::consts::E).ln()).ceil() as usize
}

pub fn lln(args: LlnArgs) -> Result<i32, CliError> {
    check_trials(args.trials)?;
    let (ensemble, provenance) = match args.ensemble {
        EnsembleArg::ScaledBasis => (
            VectorEnsemble::scaled_basis(args.n)?,
            Provenance::generated(format!("scaled-basis n={}", args.n)),
        ),
        EnsembleArg::MatrixRows => {
            let (a, provenance) = load(&args.input)?;
            (VectorEnsemble::matrix_rows(&a)?, provenance)
        }
    };
    let d = args.d.unwrap_or_else(|| default_lln_samples(ensemble.dimension()));

    let mut builder = ReportBuilder::new("lln", provenance);
    builder
        .set("ensemble", name(args.ensemble))?
        .set("n", ensemble.dimension())?
        .set("d", d)?
        .set("trials", args.trials)?
        .set("seed", args.seed)?
        .set("c_const", args.c_const)?
        .set("format", args.input.format)?;

    let stats = lln_deviation(&ensemble, d, args.trials, args.seed, args.c_const)?;
    let per_trial = stats
        .deviations
        .iter()
        .enumerate()
        .map(|(t, dev)| {
            let mut row = Map::new();
            row.insert("deviation".into(), json!(dev));
            if let Some(closed) = &stats.closed_form {
                row.insert("closed_form".into(), json!(closed[t]));
            }
            row
        })
        .collect();
    let result = json!({
        "dimension": ensemble.dimension(),
        "d": stats.d,
        "trials": stats.trials,
        "mean": stats.mean,
        "max": stats.max,
        "c_constant": stats.c_constant,
        "a_value": stats.a_value,
        "bound": ensemble.bound(),
    });
    emit(&builder.finish(per_trial, result)?, &args.output)?;
    Ok(EXIT_OK)
}

pub fn optimality(args: OptimalityArgs) -> Result<i32, CliError> {
    check_trials(args.trials)?;
    let (_, label) = block_identity(args.n, args.m)?;
    let m = args.m.unwrap_or(4 * args.n);
    let mut builder = ReportBuilder::new("optimality", Provenance::generated(label));
    builder
        .set("n", args.n)?
        .set("m", m)?
        .set("d", args.d)?
        .set("trials", args.trials)?
        .set("seed", args.seed)?;

    let out = optimality_experiment(args.n, m, args.d, args.trials, args.seed)?;
    let per_trial = out
        .trials
        .iter()
        .map(|t| {
            let mut row = Map::new();
            row.insert("seed".into(), json!(t.seed));
            row.insert("missed_blocks".into(), json!(t.missed_blocks));
            row.insert("missed".into(), json!(t.missed()));
            row.insert("error".into(), json!(t.error));
            row.insert("failed".into(), json!(t.failed()));
            row
        })
        .collect();
    let result = json!({
        "n": out.n,
        "m": out.m,
        "d": out.d,
        "trials": args.trials,
        "failure_fraction": out.failure_fraction,
        "missed_block_fraction": out.missed_block_fraction,
    });
    emit(&builder.finish(per_trial, result)?, &args.output)?;
    Ok(EXIT_OK)
}
