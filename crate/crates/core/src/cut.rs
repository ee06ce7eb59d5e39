//! Cut norm and `∞→1` norm oracles, random principal submatrices and their
//! norm decay, and the three standard witness matrices.
//!
//! Both exact oracles enumerate subsets (or sign vectors) of the smaller
//! dimension, which is valid because both norms are invariant under
//! transposition. The limit is [`MAX_ENUMERATION`] indices.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, column_norm_sum, diagonal_part, spectral_norm, top_k_column_average, DenseMatrix};
use crate::rng::{derive_rng, trial_rng, trial_seed, STREAM_SUBSET, STREAM_WITNESS};

pub const MAX_ENUMERATION: usize = 24;

/// Bits enumerated sequentially inside one parallel chunk.
const CHUNK_BITS: usize = 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsetMask {
    pub n: usize,
    pub included: Vec<bool>,
    /// Expected size `q`; each index is included with probability `q/n`.
    pub q_expected: f64,
}

impl SubsetMask {
    pub fn full(n: usize) -> Self {
        Self { n, included: vec![true; n], q_expected: n as f64 }
    }

    pub fn from_indices(n: usize, indices: &[usize]) -> Result<Self> {
        let mut included = vec![false; n];
        for &i in indices {
            *included.get_mut(i).ok_or_else(|| Error::OutOfRange(format!("index {i} ≥ n = {n}")))? = true;
        }
        Ok(Self { n, included, q_expected: indices.len() as f64 })
    }

    pub fn len(&self) -> usize {
        self.included.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn indices(&self) -> Vec<usize> {
        (0..self.n).filter(|&i| self.included[i]).collect()
    }
}

/// Includes each of `0..n` independently with probability `q/n`.
pub fn bernoulli_subset(n: usize, q: f64, seed: u64) -> Result<SubsetMask> {
    if !(0.0..=n as f64).contains(&q) {
        return Err(Error::OutOfRange(format!("q = {q} must lie in [0, {n}]")));
    }
    let delta = if n == 0 { 0.0 } else { q / n as f64 };
    let mut rng = derive_rng(seed, STREAM_SUBSET);
    let included = (0..n).map(|_| rng.random::<f64>() < delta).collect();
    Ok(SubsetMask { n, included, q_expected: q })
}

/// `(A_{ij})_{i∈rows, j∈cols}` in the original order; `None` when either
/// selection is empty (every norm of the empty matrix is 0).
pub fn restrict(a: &DenseMatrix, rows: &SubsetMask, cols: &SubsetMask) -> Result<Option<DenseMatrix>> {
    if rows.n != a.nrows() || cols.n != a.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "masks of length {}×{} for a {}×{} matrix",
            rows.n,
            cols.n,
            a.nrows(),
            a.ncols()
        )));
    }
    let (ri, ci) = (rows.indices(), cols.indices());
    if ri.is_empty() || ci.is_empty() {
        return Ok(None);
    }
    Ok(Some(DenseMatrix::from_fn(ri.len(), ci.len(), |i, j| a.get(ri[i], ci[j]))))
}

/// `(A_{ij})_{i∈rows, j≤n}`.
pub fn restrict_rows(a: &DenseMatrix, rows: &SubsetMask) -> Result<Option<DenseMatrix>> {
    restrict(a, rows, &SubsetMask::full(a.ncols()))
}

fn check_enumerable(a: &DenseMatrix) -> Result<()> {
    let small = a.nrows().min(a.ncols());
    if small > MAX_ENUMERATION {
        return Err(Error::TooLarge { got: small, limit: MAX_ENUMERATION });
    }
    Ok(())
}

/// Runs `visit(state, mask)` over all `2^bits` masks in Gray-code order, split
/// into parallel chunks keyed by the high bits. `init(prefix_mask)` builds the
/// state for the first mask of a chunk and `toggle(state, bit, now_set)`
/// updates it. Returns the best `(score, mask)`, earliest mask on ties.
fn gray_search<S, I, T, V>(bits: usize, init: I, toggle: T, score: V) -> (f64, u32)
where
    I: Fn(u32) -> S + Sync,
    T: Fn(&mut S, usize, bool) + Sync,
    V: Fn(&S) -> f64 + Sync,
{
    let low = bits.min(CHUNK_BITS);
    let high = bits - low;
    let best = (0u32..1 << high)
        .into_par_iter()
        .map(|prefix| {
            let mut mask = prefix << low;
            let mut state = init(mask);
            let mut best = (score(&state), mask);
            for g in 1u32..1 << low {
                let bit = g.trailing_zeros() as usize;
                mask ^= 1 << bit;
                toggle(&mut state, bit, mask >> bit & 1 == 1);
                let s = score(&state);
                if s > best.0 || (s == best.0 && mask < best.1) {
                    best = (s, mask);
                }
            }
            best
        })
        .collect::<Vec<_>>();
    best.into_iter()
        .fold((f64::NEG_INFINITY, 0), |acc, b| if b.0 > acc.0 || (b.0 == acc.0 && b.1 < acc.1) { b } else { acc })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutNormResult {
    /// `|Σ_{i∈I, j∈J} A_{ij}|`.
    pub value: f64,
    pub row_set: Vec<usize>,
    pub col_set: Vec<usize>,
}

/// Exact `‖A‖_C = max_{I,J} |Σ_{i∈I,j∈J} A_{ij}|`.
pub fn cut_norm_exact(a: &DenseMatrix) -> Result<CutNormResult> {
    check_enumerable(a)?;
    let transposed = a.nrows() > a.ncols();
    let b = if transposed { a.transpose() } else { a.clone() };
    let (m, n) = b.shape();
    let (_, mask) = gray_search(
        m,
        |mask| {
            let mut s = vec![0.0; n];
            for i in (0..m).filter(|i| mask >> i & 1 == 1) {
                s.iter_mut().zip(b.row(i)).for_each(|(x, y)| *x += y);
            }
            s
        },
        |s, i, add| {
            let sign = if add { 1.0 } else { -1.0 };
            s.iter_mut().zip(b.row(i)).for_each(|(x, y)| *x += sign * y);
        },
        |s| {
            let pos: f64 = s.iter().filter(|&&x| x > 0.0).sum();
            let neg: f64 = s.iter().filter(|&&x| x < 0.0).sum();
            pos.max(-neg)
        },
    );
    let rows: Vec<usize> = (0..m).filter(|i| mask >> i & 1 == 1).collect();
    let sums: Vec<f64> = (0..n).map(|j| rows.iter().map(|&i| b.get(i, j)).sum()).collect();
    let pos: Vec<usize> = (0..n).filter(|&j| sums[j] > 0.0).collect();
    let neg: Vec<usize> = (0..n).filter(|&j| sums[j] < 0.0).collect();
    let total = |cols: &[usize]| cols.iter().map(|&j| sums[j]).sum::<f64>().abs();
    let (value, cols) = if total(&pos) >= total(&neg) { (total(&pos), pos) } else { (total(&neg), neg) };
    let (rows, cols) = if cols.is_empty() { (Vec::new(), Vec::new()) } else { (rows, cols) };
    Ok(if transposed {
        CutNormResult { value, row_set: cols, col_set: rows }
    } else {
        CutNormResult { value, row_set: rows, col_set: cols }
    })
}

/// Exact `‖A‖_{∞→1} = max_{x∈{±1}ⁿ} ‖Ax‖₁`.
pub fn inf_to_one_norm_exact(a: &DenseMatrix) -> Result<f64> {
    check_enumerable(a)?;
    let b = if a.ncols() > a.nrows() { a.transpose() } else { a.clone() };
    let (m, n) = b.shape();
    let cols: Vec<Vec<f64>> = (0..n).map(|j| b.column(j)).collect();
    // x₀ = +1 throughout; mask bit t is set when x_{t+1} = −1.
    let apply = |mask: u32| -> Vec<f64> {
        let mut y = vec![0.0; m];
        for (j, c) in cols.iter().enumerate() {
            let s = if j > 0 && mask >> (j - 1) & 1 == 1 { -1.0 } else { 1.0 };
            y.iter_mut().zip(c).for_each(|(u, v)| *u += s * v);
        }
        y
    };
    let (_, mask) = gray_search(
        n - 1,
        apply,
        |y, t, negated| {
            let s = if negated { -2.0 } else { 2.0 };
            y.iter_mut().zip(&cols[t + 1]).for_each(|(u, v)| *u += s * v);
        },
        |y| y.iter().map(|v| v.abs()).sum(),
    );
    Ok(apply(mask).iter().map(|v| v.abs()).sum())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecayEstimate {
    pub q: f64,
    pub trials: usize,
    /// Norm of the restricted matrix per trial (0 for an empty subset).
    pub samples: Vec<f64>,
    pub subset_sizes: Vec<usize>,
    pub mean: f64,
    /// Cut decay: `δ²‖A − D(A)‖_C`, `δ‖D(A)‖_C`, `δ^{3/2}(‖A‖_Col + ‖Aᵀ‖_Col)`.
    /// Spectral decay: `√δ·‖A‖₂`, `max(1, √ln q)·‖A‖_(⌈1/δ⌉)`. Here `δ = q/n`.
    pub bound_terms: Vec<f64>,
    /// `mean / Σ bound_terms`, or 0 when the bound vanishes.
    pub fitted_constant: f64,
}

impl DecayEstimate {
    fn new(q: f64, outcomes: Vec<(f64, usize)>, bound_terms: Vec<f64>) -> Self {
        let trials = outcomes.len();
        let (samples, subset_sizes): (Vec<f64>, Vec<usize>) = outcomes.into_iter().unzip();
        let mean = samples.iter().sum::<f64>() / trials as f64;
        let total: f64 = bound_terms.iter().sum();
        let fitted_constant = if total > 0.0 { mean / total } else { 0.0 };
        Self { q, trials, samples, subset_sizes, mean, bound_terms, fitted_constant }
    }

    /// `mean / bound_terms[i]`.
    pub fn term_ratio(&self, i: usize) -> f64 {
        self.mean / self.bound_terms[i]
    }

    pub fn standard_error(&self) -> f64 {
        let n = self.trials as f64;
        if self.trials < 2 {
            return 0.0;
        }
        let var = self.samples.iter().map(|x| (x - self.mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    }
}

fn check_trials(trials: usize) -> Result<()> {
    if trials == 0 {
        return Err(Error::OutOfRange("trials must be at least 1".into()));
    }
    Ok(())
}

/// Monte-Carlo estimate of `E‖A|_{Q×Q}‖_C` for a square `A` with `n ≤ 24`.
pub fn cut_decay_estimate(a: &DenseMatrix, q: f64, trials: usize, seed: u64) -> Result<DecayEstimate> {
    if !a.is_square() {
        return Err(Error::NotSquare { rows: a.nrows(), cols: a.ncols() });
    }
    let n = a.nrows();
    if n > MAX_ENUMERATION {
        return Err(Error::TooLarge { got: n, limit: MAX_ENUMERATION });
    }
    check_trials(trials)?;
    bernoulli_subset(n, q, 0)?;
    let outcomes = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<(f64, usize)> {
            let mask = bernoulli_subset(n, q, trial_seed(seed, t))?;
            let value = match restrict(a, &mask, &mask)? {
                Some(sub) => cut_norm_exact(&sub)?.value,
                None => 0.0,
            };
            Ok((value, mask.len()))
        })
        .collect::<Result<Vec<_>>>()?;
    let delta = q / n as f64;
    let diag = diagonal_part(a)?;
    let off = a.sub(&diag)?;
    let terms = vec![
        delta * delta * cut_norm_exact(&off)?.value,
        delta * cut_norm_exact(&diag)?.value,
        delta.powf(1.5) * (column_norm_sum(a) + column_norm_sum(&a.transpose())),
    ];
    Ok(DecayEstimate::new(q, outcomes, terms))
}

/// `max(1, √ln q)`.
pub fn clamped_sqrt_log(q: f64) -> f64 {
    if q <= std::f64::consts::E {
        1.0
    } else {
        q.ln().sqrt()
    }
}

/// Monte-Carlo estimate of `E‖A|_Q‖₂`, `Q` a Bernoulli subset of the rows
/// with expected size `q`.
///
/// The second bound term averages the `⌈1/δ⌉` largest *row* lengths: these are
/// the vectors whose outer products sum to `(A|_Q)ᵀA|_Q`.
pub fn spectral_decay_estimate(a: &DenseMatrix, q: f64, trials: usize, seed: u64) -> Result<DecayEstimate> {
    let m = a.nrows();
    if !(q >= 1.0 && q <= m as f64) {
        return Err(Error::OutOfRange(format!("q = {q} must lie in [1, {m}]")));
    }
    check_trials(trials)?;
    let outcomes = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<(f64, usize)> {
            let mask = bernoulli_subset(m, q, trial_seed(seed, t))?;
            let value = match restrict_rows(a, &mask)? {
                Some(sub) => spectral_norm(&sub)?,
                None => 0.0,
            };
            Ok((value, mask.len()))
        })
        .collect::<Result<Vec<_>>>()?;
    let delta = q / m as f64;
    let k = linalg::fractional_count(1.0 / delta, m);
    let terms = vec![
        delta.sqrt() * spectral_norm(a)?,
        clamped_sqrt_log(q) * top_k_column_average(&a.transpose(), k),
    ];
    Ok(DecayEstimate::new(q, outcomes, terms))
}

/// `mean / (ε·q²)` for the cut-norm decay of `A`.
pub fn csp_ratio(a: &DenseMatrix, epsilon: f64, q: f64, trials: usize, seed: u64) -> Result<f64> {
    if !(epsilon > 0.0 && q > 0.0) {
        return Err(Error::OutOfRange("epsilon and q must be positive".into()));
    }
    Ok(cut_decay_estimate(a, q, trials, seed)?.mean / (epsilon * q * q))
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct OrderStatistics {
    /// Monte-Carlo mean of `√(ln n(δ))·max_j δ_j a_j`, `n(δ) = e + Σ δ_j`.
    pub empirical: f64,
    pub standard_error: f64,
    /// `(δ/4e)·√(ln δn)·Σ_{j≤⌈1/δ⌉} a_j`.
    pub lower: f64,
    /// `4δ·√(ln δn)·Σ_{j≤⌈1/δ⌉} a_j`.
    pub upper: f64,
}

impl OrderStatistics {
    pub fn bracketed(&self) -> bool {
        self.lower <= self.empirical && self.empirical <= self.upper
    }
}

const ORDER_BLOCK: usize = 4096;

/// Both sides of the order-statistics bracket for independent selectors
/// `δ_j ~ Bernoulli(δ)`, plus a Monte-Carlo estimate of the middle.
pub fn order_statistics_check(a: &[f64], delta: f64, trials: usize, seed: u64) -> Result<OrderStatistics> {
    let n = a.len();
    if n == 0 {
        return Err(Error::Empty);
    }
    if a.windows(2).any(|w| w[0] < w[1]) || a.iter().any(|&x| x.is_nan() || x < 0.0) {
        return Err(Error::NotSorted);
    }
    if !(delta > 2.0 / n as f64 && delta < 1.0) {
        return Err(Error::OutOfRange(format!("delta = {delta} must lie in (2/{n}, 1)")));
    }
    check_trials(trials)?;
    let blocks = trials.div_ceil(ORDER_BLOCK);
    let sums = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = trial_rng(seed, b);
            let count = ORDER_BLOCK.min(trials - b * ORDER_BLOCK);
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..count {
                let mut size = 0usize;
                let mut top = 0.0f64;
                for &x in a {
                    if rng.random::<f64>() < delta {
                        size += 1;
                        top = top.max(x);
                    }
                }
                let v = (std::f64::consts::E + size as f64).ln().sqrt() * top;
                s += v;
                s2 += v * v;
            }
            (s, s2)
        })
        .collect::<Vec<_>>();
    let (s, s2) = sums.iter().fold((0.0, 0.0), |acc, x| (acc.0 + x.0, acc.1 + x.1));
    let t = trials as f64;
    let empirical = s / t;
    let var = if trials > 1 { ((s2 - t * empirical * empirical) / (t - 1.0)).max(0.0) } else { 0.0 };
    let head: f64 = a.iter().take(linalg::fractional_count(1.0 / delta, n)).sum();
    let log_factor = (delta * n as f64).ln().sqrt();
    Ok(OrderStatistics {
        empirical,
        standard_error: (var / t).sqrt(),
        lower: delta / (4.0 * std::f64::consts::E) * log_factor * head,
        upper: 4.0 * delta * log_factor * head,
    })
}

pub fn witness_all_ones(n: usize) -> DenseMatrix {
    DenseMatrix::from_fn(n, n, |_, _| 1.0)
}

pub fn witness_identity(n: usize) -> DenseMatrix {
    DenseMatrix::identity(n)
}

/// I.i.d. uniform `±1` entries.
pub fn witness_random_sign(n: usize, seed: u64) -> DenseMatrix {
    let mut rng = derive_rng(seed, STREAM_WITNESS);
    DenseMatrix::from_fn(n, n, |_, _| if rng.random::<bool>() { 1.0 } else { -1.0 })
}

/// `‖S‖_{∞→1}` for a `±1` matrix `S`; at least `|Q|^{3/2}/√2` when `S` is square
/// of size `|Q|`.
pub fn sign_matrix_lower_bound(s: &DenseMatrix) -> Result<f64> {
    if s.as_slice().iter().any(|&x| x != 1.0 && x != -1.0) {
        return Err(Error::NotSignMatrix);
    }
    inf_to_one_norm_exact(s)
}

/// `|Q|^{3/2}/√2`.
pub fn sign_matrix_floor(size: usize) -> f64 {
    (size as f64).powf(1.5) / std::f64::consts::SQRT_2
}
