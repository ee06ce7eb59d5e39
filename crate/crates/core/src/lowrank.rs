//! Rank-k approximation from a row sketch and its spectral-norm guarantee.
//!
//! The projector `P_k` acts on the column space `ℝⁿ` of `A`: it projects onto
//! the top `k` *right* singular vectors of the `d×n` sketch `Ã` (the top
//! eigenvectors of `ÃᵀÃ`), and `A·P_k` is the approximation. Singular
//! directions of `Ã` with zero singular value are never included, so when
//! `k > rank(Ã)` the projector has rank `rank(Ã)` and its kernel contains
//! `ker Ã`.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    self, frobenius_norm, singular_values, spectral_norm, symmetric_eigen,
    symmetric_spectral_norm, DenseMatrix,
};
use crate::rng::{derive_rng, trial_seed, STREAM_POWER};
use crate::sampling::{
    draw_positions, materialize_pass, required_sample_size, sample_sketch,
    sample_sketch_one_pass_with_stats, weight_pass, Sketch, StreamStats,
};
use crate::stream::RowStream;

/// Orthogonal projection onto the span of orthonormal vectors in `ℝⁿ`.
#[derive(Clone, Debug)]
pub struct Projector {
    n: usize,
    k: usize,
    /// Orthonormal basis vectors, each of length `n`.
    columns: Vec<Vec<f64>>,
}

impl Projector {
    /// Zero map on `ℝⁿ` (the degenerate `k = 0` projector).
    pub fn zero(n: usize) -> Self {
        Self { n, k: 0, columns: Vec::new() }
    }

    /// Projector onto the span of the given columns, which must be orthonormal.
    pub fn from_orthonormal_columns(n: usize, columns: Vec<Vec<f64>>) -> Result<Self> {
        if columns.iter().any(|c| c.len() != n) {
            return Err(Error::DimensionMismatch("basis vector length differs from n".into()));
        }
        let k = columns.len();
        Ok(Self { n, k, columns })
    }

    pub fn ambient_dim(&self) -> usize {
        self.n
    }

    /// The `k` that was asked for.
    pub fn requested_k(&self) -> usize {
        self.k
    }

    /// Dimension of the range; at most [`Projector::requested_k`].
    pub fn rank(&self) -> usize {
        self.columns.len()
    }

    pub fn basis(&self) -> &[Vec<f64>] {
        &self.columns
    }

    /// `n×rank` basis matrix, or `None` for the zero projector.
    pub fn basis_matrix(&self) -> Option<DenseMatrix> {
        if self.columns.is_empty() {
            return None;
        }
        Some(DenseMatrix::from_fn(self.n, self.columns.len(), |i, j| self.columns[j][i]))
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for b in &self.columns {
            let c: f64 = b.iter().zip(x).map(|(u, v)| u * v).sum();
            for (o, u) in out.iter_mut().zip(b) {
                *o += c * u;
            }
        }
        out
    }

    /// Dense `n×n` projection matrix.
    pub fn matrix(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.n, self.n, |i, j| self.columns.iter().map(|b| b[i] * b[j]).sum())
    }
}

/// Top-`k` right singular vectors of an arbitrary `d×n` sketch matrix.
pub fn projector_from_rows(sketch: &DenseMatrix, k: usize) -> Result<Projector> {
    let n = sketch.ncols();
    if k > n {
        return Err(Error::KTooLarge { k, n });
    }
    if k == 0 {
        return Ok(Projector { n, k, columns: Vec::new() });
    }
    if frobenius_norm(sketch) == 0.0 {
        return Ok(Projector { n, k, columns: Vec::new() });
    }
    let dec = linalg::svd(sketch)?;
    let top = dec.singular_values[0];
    let cutoff = top * (sketch.nrows().max(n) as f64) * f64::EPSILON;
    let usable = dec.singular_values.iter().take_while(|&&s| s > cutoff).count();
    let columns = (0..usable.min(k)).map(|j| dec.right_vectors.column(j)).collect();
    Ok(Projector { n, k, columns })
}

pub fn projector_top_k(sketch: &Sketch, k: usize) -> Result<Projector> {
    projector_from_rows(&sketch.matrix, k)
}

/// `A − A·P`.
pub fn residual(a: &DenseMatrix, p: &Projector) -> Result<DenseMatrix> {
    if p.ambient_dim() != a.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "projector acts on R^{} but A has {} columns",
            p.ambient_dim(),
            a.ncols()
        )));
    }
    let n = a.ncols();
    let mut data = Vec::with_capacity(a.nrows() * n);
    for row in a.rows_iter() {
        let projected = p.apply(row);
        data.extend(row.iter().zip(&projected).map(|(x, y)| x - y));
    }
    DenseMatrix::new(a.nrows(), n, data)
}

/// `‖A − A·P‖₂`.
pub fn approximation_error(a: &DenseMatrix, p: &Projector) -> Result<f64> {
    spectral_norm(&residual(a, p)?)
}

/// `‖A(I − P)‖₂²` computed from `G = AᵀA` alone.
fn error_sq_from_gram(gram: &DenseMatrix, p: &Projector) -> Result<f64> {
    let n = gram.nrows();
    let pm = p.matrix();
    let complement = DenseMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } - pm.get(i, j));
    let inner = complement.matmul(gram)?.matmul(&complement)?;
    let sym = DenseMatrix::from_fn(n, n, |i, j| 0.5 * (inner.get(i, j) + inner.get(j, i)));
    let (vals, _) = symmetric_eigen(&sym)?;
    Ok(vals[0].max(0.0))
}

/// Both sides of `‖A − AP_k‖₂² ≤ σ_{k+1}(A)² + 2‖AᵀA − ÃᵀÃ‖₂`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DkCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

pub const DK_SLACK: f64 = 1e-8;

/// Checks the deterministic comparison between the approximation error of the
/// sketch projector and the Gram-matrix deviation. Holds for every sketch
/// matrix `Ã`, sampled or not.
pub fn dk_bound_check(a: &DenseMatrix, sketch: &DenseMatrix, k: usize) -> Result<DkCheck> {
    if sketch.ncols() != a.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "sketch has {} columns, A has {}",
            sketch.ncols(),
            a.ncols()
        )));
    }
    let p = projector_from_rows(sketch, k)?;
    let err = approximation_error(a, &p)?;
    let sigma = singular_values(a)?.get(k).copied().unwrap_or(0.0);
    let dev = symmetric_spectral_norm(&a.gram().sub(&sketch.gram())?)?;
    let lhs = err * err;
    let rhs = sigma * sigma + 2.0 * dev;
    Ok(DkCheck { lhs, rhs, holds: lhs <= rhs + DK_SLACK })
}

/// How the rows of `A` are reached.
pub enum Source<'a> {
    Matrix(&'a DenseMatrix),
    /// Replayable stream, read twice.
    TwoPass(&'a mut dyn RowStream),
    /// Stream read exactly once; requires an explicit sample size.
    OnePass(&'a mut dyn RowStream),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingMode {
    InMemory,
    TwoPass,
    OnePass,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ApproxConfig {
    pub k: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub c_constant: f64,
    /// Overrides the sample-size formula when set.
    pub d: Option<usize>,
    pub seed: u64,
}

impl ApproxConfig {
    fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::OutOfRange(format!("epsilon = {} must lie in (0, 1)", self.epsilon)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::OutOfRange(format!("delta = {} must lie in (0, 1)", self.delta)));
        }
        if self.d == Some(0) {
            return Err(Error::OutOfRange("sample size d must be at least 1".into()));
        }
        Ok(())
    }

    fn sample_size(&self, r: f64) -> Result<usize> {
        match self.d {
            Some(d) => Ok(d),
            None => required_sample_size(r, self.epsilon, self.delta, self.c_constant),
        }
    }
}

/// Outcome of one low-rank approximation run. Fields that need the full matrix
/// (or its Gram matrix) are `None` for one-pass streams.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ApproxReport {
    pub mode: SamplingMode,
    pub k: usize,
    pub d: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub c_constant: f64,
    pub seed: u64,
    pub frobenius_norm: f64,
    pub numerical_rank: Option<f64>,
    pub spectral_norm: Option<f64>,
    pub sigma_kplus1: Option<f64>,
    pub error_spectral: Option<f64>,
    /// `σ_{k+1}(A) + ε‖A‖₂`.
    pub bound: Option<f64>,
    /// `‖AᵀA − ÃᵀÃ‖₂`.
    pub gram_deviation: Option<f64>,
    pub satisfied: Option<bool>,
    pub projector_rank: usize,
}

impl ApproxReport {
    /// Whether the Gram deviation alone certifies the guarantee:
    /// `‖AᵀA − ÃᵀÃ‖₂ ≤ ε²‖A‖₂²/2`.
    pub fn gram_certificate(&self) -> Option<bool> {
        let dev = self.gram_deviation?;
        let s = self.spectral_norm?;
        Some(dev <= 0.5 * self.epsilon * self.epsilon * s * s)
    }

    fn fill(&mut self, spectral: f64, sigma_next: f64, error: f64, gram_dev: f64) {
        let bound = sigma_next + self.epsilon * spectral;
        self.spectral_norm = Some(spectral);
        self.sigma_kplus1 = Some(sigma_next);
        self.error_spectral = Some(error);
        self.bound = Some(bound);
        self.gram_deviation = Some(gram_dev);
        self.satisfied = Some(error <= bound);
    }
}

#[derive(Clone, Debug)]
pub struct LowRankOutcome {
    pub projector: Projector,
    pub report: ApproxReport,
    pub sketch: Sketch,
    pub stream_stats: Option<StreamStats>,
}

pub const POWER_ITERATIONS: usize = 30;

/// Estimate of `λ_max(G)` for a symmetric PSD `G` by power iteration from a
/// seeded Gaussian start. Never exceeds the true value by more than rounding,
/// and is floored at `trace(G)/n`.
pub fn power_iteration_top_eigenvalue(gram: &DenseMatrix, iterations: usize, seed: u64) -> f64 {
    let n = gram.nrows();
    let mut rng = derive_rng(seed, STREAM_POWER);
    let mut v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let trace_floor = (0..n).map(|i| gram.get(i, i)).sum::<f64>() / n as f64;
    let mut estimate = 0.0;
    for _ in 0..=iterations {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            break;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        let gv: Vec<f64> = (0..n).map(|i| gram.row(i).iter().zip(&v).map(|(a, b)| a * b).sum()).collect();
        estimate = v.iter().zip(&gv).map(|(a, b)| a * b).sum::<f64>();
        v = gv;
    }
    estimate.max(trace_floor)
}

fn blank_report(cfg: &ApproxConfig, mode: SamplingMode, d: usize, frob: f64, r: Option<f64>) -> ApproxReport {
    ApproxReport {
        mode,
        k: cfg.k,
        d,
        epsilon: cfg.epsilon,
        delta: cfg.delta,
        c_constant: cfg.c_constant,
        seed: cfg.seed,
        frobenius_norm: frob,
        numerical_rank: r,
        spectral_norm: None,
        sigma_kplus1: None,
        error_spectral: None,
        bound: None,
        gram_deviation: None,
        satisfied: None,
        projector_rank: 0,
    }
}

/// Samples a sketch, builds `P_k` and reports the error against the guarantee
/// `‖A − AP_k‖₂ ≤ σ_{k+1}(A) + ε‖A‖₂`.
pub fn low_rank_approximate(source: Source<'_>, cfg: &ApproxConfig) -> Result<LowRankOutcome> {
    cfg.validate()?;
    match source {
        Source::Matrix(a) => approximate_in_memory(a, cfg),
        Source::TwoPass(stream) => approximate_two_pass(stream, cfg),
        Source::OnePass(stream) => approximate_one_pass(stream, cfg),
    }
}

fn approximate_in_memory(a: &DenseMatrix, cfg: &ApproxConfig) -> Result<LowRankOutcome> {
    let n = a.ncols();
    if cfg.k > n {
        return Err(Error::KTooLarge { k: cfg.k, n });
    }
    let frob = frobenius_norm(a);
    if frob == 0.0 {
        return Err(Error::ZeroMatrix);
    }
    let sv = singular_values(a)?;
    let spectral = sv[0];
    let r = ((frob * frob) / (spectral * spectral)).max(1.0);
    let d = cfg.sample_size(r)?;
    let sketch = sample_sketch(a, d, cfg.seed)?;
    let projector = projector_top_k(&sketch, cfg.k)?;
    let error = approximation_error(a, &projector)?;
    let gram_dev = symmetric_spectral_norm(&a.gram().sub(&sketch.matrix.gram())?)?;
    let sigma_next = sv.get(cfg.k).copied().unwrap_or(0.0);
    let mut report = blank_report(cfg, SamplingMode::InMemory, d, frob, Some(r));
    report.fill(spectral, sigma_next, error, gram_dev);
    report.projector_rank = projector.rank();
    Ok(LowRankOutcome { projector, report, sketch, stream_stats: None })
}

fn approximate_two_pass(stream: &mut dyn RowStream, cfg: &ApproxConfig) -> Result<LowRankOutcome> {
    if !stream.is_replayable() {
        return Err(Error::NotReplayable);
    }
    let n = stream.ncols();
    if cfg.k > n {
        return Err(Error::KTooLarge { k: cfg.k, n });
    }
    let mut gram_buf = Vec::new();
    let summary = weight_pass(stream, Some(&mut gram_buf))?;
    let frob = summary.frobenius();
    if frob == 0.0 {
        return Err(Error::ZeroMatrix);
    }
    let gram = DenseMatrix::new(n, n, gram_buf)?;
    let lambda = power_iteration_top_eigenvalue(&gram, POWER_ITERATIONS, cfg.seed);
    let r = (summary.total / lambda).max(1.0);
    let d = cfg.sample_size(r)?;
    let positions = draw_positions(&summary, d, cfg.seed)?;
    let (sketch, peak) = materialize_pass(stream, &summary, &positions, cfg.seed)?;
    let projector = projector_top_k(&sketch, cfg.k)?;

    let (eigs, _) = symmetric_eigen(&gram)?;
    let spectral = eigs[0].max(0.0).sqrt();
    let sigma_next = eigs.get(cfg.k).map(|l| l.max(0.0).sqrt()).unwrap_or(0.0);
    let error = error_sq_from_gram(&gram, &projector)?.sqrt();
    let gram_dev = symmetric_spectral_norm(&gram.sub(&sketch.matrix.gram())?)?;
    let mut report = blank_report(cfg, SamplingMode::TwoPass, d, frob, Some(r));
    report.fill(spectral, sigma_next, error, gram_dev);
    report.projector_rank = projector.rank();
    let stats = StreamStats { passes: 2, rows_seen: summary.row_ids.len(), peak_resident_rows: peak };
    Ok(LowRankOutcome { projector, report, sketch, stream_stats: Some(stats) })
}

fn approximate_one_pass(stream: &mut dyn RowStream, cfg: &ApproxConfig) -> Result<LowRankOutcome> {
    let n = stream.ncols();
    if cfg.k > n {
        return Err(Error::KTooLarge { k: cfg.k, n });
    }
    let d = cfg.d.ok_or_else(|| {
        Error::OutOfRange("one-pass sampling needs an explicit sample size d".into())
    })?;
    let (sketch, stats) = sample_sketch_one_pass_with_stats(stream, d, cfg.seed)?;
    let projector = projector_top_k(&sketch, cfg.k)?;
    let mut report =
        blank_report(cfg, SamplingMode::OnePass, d, sketch.frobenius_of_source, None);
    report.projector_rank = projector.rank();
    Ok(LowRankOutcome { projector, report, sketch, stream_stats: Some(stats) })
}

/// `m×n` matrix with `A_{ij} = √(n/m)` when `j = ⌈(n/m)·i⌉` (1-based) and zero
/// otherwise: every row has one nonzero entry, column `j` is supported on the
/// block `I_j` of `m/n` consecutive rows, and the columns are orthonormal.
pub fn block_identity_matrix(n: usize, m: usize) -> Result<DenseMatrix> {
    if n == 0 || m <= n || !m.is_multiple_of(n) {
        return Err(Error::BadShape(format!(
            "block identity needs 0 < n < m with n dividing m, got n={n}, m={m}"
        )));
    }
    let value = (n as f64 / m as f64).sqrt();
    Ok(DenseMatrix::from_fn(m, n, |i, j| {
        let col = ((i + 1) * n).div_ceil(m) - 1;
        if col == j {
            value
        } else {
            0.0
        }
    }))
}

/// Per-trial outcome of the block-identity experiment.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct OptimalityTrial {
    pub seed: u64,
    pub missed_blocks: usize,
    pub error: f64,
}

impl OptimalityTrial {
    pub fn missed(&self) -> bool {
        self.missed_blocks > 0
    }

    pub fn failed(&self) -> bool {
        self.error >= 1.0 - 1e-6
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OptimalityOutcome {
    pub n: usize,
    pub m: usize,
    pub d: usize,
    pub trials: Vec<OptimalityTrial>,
    /// Fraction of trials with `‖A − AP_n‖₂ ≥ 1 − 1e-6`.
    pub failure_fraction: f64,
    /// Fraction of trials in which some block received no sample.
    pub missed_block_fraction: f64,
}

/// Samples `d` rows of the block-identity matrix per trial and records whether
/// some block went unsampled and whether `P_n` then fails the guarantee.
pub fn optimality_experiment(n: usize, m: usize, d: usize, trials: usize, seed: u64) -> Result<OptimalityOutcome> {
    let a = block_identity_matrix(n, m)?;
    if d == 0 || trials == 0 {
        return Err(Error::OutOfRange("d and trials must be at least 1".into()));
    }
    let block = m / n;
    let records = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<OptimalityTrial> {
            let s = trial_seed(seed, t);
            let sketch = sample_sketch(&a, d, s)?;
            let mut hit = vec![false; n];
            for &i in &sketch.chosen_indices {
                hit[i / block] = true;
            }
            let projector = projector_top_k(&sketch, n)?;
            let error = approximation_error(&a, &projector)?;
            Ok(OptimalityTrial { seed: s, missed_blocks: hit.iter().filter(|h| !**h).count(), error })
        })
        .collect::<Result<Vec<_>>>()?;
    let frac = |f: &dyn Fn(&OptimalityTrial) -> bool| {
        records.iter().filter(|t| f(t)).count() as f64 / trials as f64
    };
    Ok(OptimalityOutcome {
        n,
        m,
        d,
        failure_fraction: frac(&|t| t.failed()),
        missed_block_fraction: frac(&|t| t.missed()),
        trials: records,
    })
}
