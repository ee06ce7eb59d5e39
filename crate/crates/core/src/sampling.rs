//! Row sampling with replacement, proportional to squared row lengths.
//!
//! Three modes share one output type, [`Sketch`]:
//!
//! * in memory ([`sample_sketch`]),
//! * two passes over a replayable stream ([`sample_sketch_two_pass`]): the first
//!   pass collects row weights, the second materializes only the chosen rows.
//!   Given the same seed it draws the same indices as the in-memory sampler and
//!   produces a bit-identical sketch,
//! * one pass ([`sample_sketch_one_pass`]) with `d` independent single-item
//!   weighted reservoirs.
//!
//! Every sketch row is `(1/√d)(‖A‖_F/‖x_j‖₂)·x_j`, so all rows have length
//! `‖A‖_F/√d` and `E ÃᵀÃ = AᵀA`.

use std::rc::Rc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{snap_ceil, DenseMatrix};
use crate::rng::{derive_rng, STREAM_ONE_PASS, STREAM_SAMPLING};
use crate::stream::{checked_traverse, RowStream};

/// Compensated running sum.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

#[inline]
pub fn squared_norm(row: &[f64]) -> f64 {
    row.iter().map(|x| x * x).sum()
}

/// Inverse-CDF table for a finite discrete distribution given by nonnegative weights.
#[derive(Clone, Debug)]
pub(crate) struct CumulativeTable {
    cumulative: Vec<f64>,
    last_positive: usize,
}

impl CumulativeTable {
    /// Fails with [`Error::ZeroMatrix`] when all weights are zero.
    pub(crate) fn from_weights(weights: &[f64]) -> Result<Self> {
        let total = {
            let mut s = NeumaierSum::default();
            weights.iter().for_each(|&w| s.add(w));
            s.value()
        };
        if total <= 0.0 {
            return Err(Error::ZeroMatrix);
        }
        let mut running = NeumaierSum::default();
        let cumulative = weights
            .iter()
            .map(|&w| {
                running.add(w / total);
                running.value()
            })
            .collect();
        let last_positive = weights.iter().rposition(|&w| w > 0.0).expect("positive total");
        Ok(Self { cumulative, last_positive })
    }

    pub(crate) fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let top = self.cumulative[self.cumulative.len() - 1];
        let target = rng.random::<f64>() * top;
        let pos = self.cumulative.partition_point(|&c| c <= target);
        pos.min(self.last_positive)
    }
}

/// `p_j = ‖row_j‖₂² / ‖A‖_F²`.
pub fn row_distribution(a: &DenseMatrix) -> Result<Vec<f64>> {
    let weights: Vec<f64> = a.rows_iter().map(squared_norm).collect();
    let mut total = NeumaierSum::default();
    weights.iter().for_each(|&w| total.add(w));
    let total = total.value();
    if total <= 0.0 {
        return Err(Error::ZeroMatrix);
    }
    Ok(weights.into_iter().map(|w| w / total).collect())
}

/// Sampled-and-rescaled `d×n` matrix together with its sampling metadata.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Sketch {
    pub matrix: DenseMatrix,
    /// Source row index of each sketch row; repeats allowed.
    pub chosen_indices: Vec<usize>,
    /// Sampling probability of each chosen row.
    pub probabilities: Vec<f64>,
    pub frobenius_of_source: f64,
    pub d: usize,
    pub seed: u64,
}

impl Sketch {
    /// Common length of every sketch row.
    pub fn row_length(&self) -> f64 {
        self.frobenius_of_source / (self.d as f64).sqrt()
    }
}

/// Bookkeeping for the streaming samplers.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamStats {
    pub passes: usize,
    pub rows_seen: usize,
    /// Largest number of rows of `A` held at once, counting the row being read.
    pub peak_resident_rows: usize,
}

#[inline]
fn rescale_into(dst: &mut [f64], row: &[f64], frobenius: f64, weight: f64, d: usize) {
    let factor = frobenius / ((d as f64).sqrt() * weight.sqrt());
    for (o, x) in dst.iter_mut().zip(row) {
        *o = factor * x;
    }
}

fn check_d(d: usize) -> Result<()> {
    if d == 0 {
        return Err(Error::OutOfRange("sample size d must be at least 1".into()));
    }
    Ok(())
}

/// Weights and row ids gathered by a first pass.
pub(crate) struct WeightSummary {
    pub row_ids: Vec<usize>,
    pub weights: Vec<f64>,
    pub total: f64,
    pub ncols: usize,
}

impl WeightSummary {
    fn from_matrix(a: &DenseMatrix) -> Self {
        let weights: Vec<f64> = a.rows_iter().map(squared_norm).collect();
        let mut total = NeumaierSum::default();
        weights.iter().for_each(|&w| total.add(w));
        Self { row_ids: (0..a.nrows()).collect(), weights, total: total.value(), ncols: a.ncols() }
    }

    pub(crate) fn frobenius(&self) -> f64 {
        self.total.sqrt()
    }
}

/// First pass over a stream: row weights and, optionally, the Gram matrix `AᵀA`.
pub(crate) fn weight_pass(
    stream: &mut dyn RowStream,
    gram: Option<&mut Vec<f64>>,
) -> Result<WeightSummary> {
    let n = stream.ncols();
    let mut row_ids = Vec::new();
    let mut weights = Vec::new();
    let mut total = NeumaierSum::default();
    let mut gram = gram;
    if let Some(g) = gram.as_deref_mut() {
        g.clear();
        g.resize(n * n, 0.0);
    }
    checked_traverse(stream, &mut |idx, row| {
        let w = squared_norm(row);
        row_ids.push(idx);
        weights.push(w);
        total.add(w);
        if let Some(g) = gram.as_deref_mut() {
            crate::linalg::add_outer(g, row, 1.0);
        }
        Ok(())
    })?;
    if let Some(g) = gram {
        crate::linalg::symmetrize_upper(g, n);
    }
    if row_ids.is_empty() {
        return Err(Error::Empty);
    }
    Ok(WeightSummary { row_ids, weights, total: total.value(), ncols: n })
}

/// Positions (into the weight vector) of `d` i.i.d. draws.
pub(crate) fn draw_positions(summary: &WeightSummary, d: usize, seed: u64) -> Result<Vec<usize>> {
    check_d(d)?;
    let table = CumulativeTable::from_weights(&summary.weights)?;
    let mut rng = derive_rng(seed, STREAM_SAMPLING);
    Ok((0..d).map(|_| table.sample(&mut rng)).collect())
}

fn probabilities_of(summary: &WeightSummary, positions: &[usize]) -> Vec<f64> {
    positions.iter().map(|&p| summary.weights[p] / summary.total).collect()
}

/// In-memory sampler: `d` i.i.d. rows drawn proportionally to squared length.
pub fn sample_sketch(a: &DenseMatrix, d: usize, seed: u64) -> Result<Sketch> {
    check_d(d)?;
    let summary = WeightSummary::from_matrix(a);
    let positions = draw_positions(&summary, d, seed)?;
    let frob = summary.frobenius();
    let n = a.ncols();
    let mut data = vec![0.0; d * n];
    for (slot, &p) in positions.iter().enumerate() {
        rescale_into(&mut data[slot * n..(slot + 1) * n], a.row(p), frob, summary.weights[p], d);
    }
    Ok(Sketch {
        matrix: DenseMatrix::new(d, n, data)?,
        probabilities: probabilities_of(&summary, &positions),
        chosen_indices: positions,
        frobenius_of_source: frob,
        d,
        seed,
    })
}

/// Second pass: writes the rescaled chosen rows into their sketch slots.
pub(crate) fn materialize_pass(
    stream: &mut dyn RowStream,
    summary: &WeightSummary,
    positions: &[usize],
    seed: u64,
) -> Result<(Sketch, usize)> {
    let d = positions.len();
    let n = summary.ncols;
    let frob = summary.frobenius();
    // (stream position, sketch slot), sorted so one forward scan suffices.
    let mut wanted: Vec<(usize, usize)> =
        positions.iter().enumerate().map(|(slot, &p)| (p, slot)).collect();
    wanted.sort_unstable();
    let mut data = vec![0.0; d * n];
    let mut cursor = 0usize;
    let mut position = 0usize;
    let mut filled = 0usize;
    let mut peak = 0usize;
    checked_traverse(stream, &mut |idx, row| {
        if position >= summary.row_ids.len() || summary.row_ids[position] != idx {
            return Err(Error::InvalidStream("second pass differs from the first".into()));
        }
        peak = peak.max(filled + 1);
        while cursor < wanted.len() && wanted[cursor].0 == position {
            let slot = wanted[cursor].1;
            rescale_into(&mut data[slot * n..(slot + 1) * n], row, frob, summary.weights[position], d);
            filled += 1;
            cursor += 1;
        }
        position += 1;
        Ok(())
    })?;
    if position != summary.row_ids.len() || cursor != wanted.len() {
        return Err(Error::InvalidStream("second pass ended early".into()));
    }
    let sketch = Sketch {
        matrix: DenseMatrix::new(d, n, data)?,
        probabilities: probabilities_of(summary, positions),
        chosen_indices: positions.iter().map(|&p| summary.row_ids[p]).collect(),
        frobenius_of_source: frob,
        d,
        seed,
    };
    Ok((sketch, peak.max(filled)))
}

/// Two-pass sampler over a replayable stream.
pub fn sample_sketch_two_pass(stream: &mut dyn RowStream, d: usize, seed: u64) -> Result<Sketch> {
    sample_sketch_two_pass_with_stats(stream, d, seed).map(|(s, _)| s)
}

pub fn sample_sketch_two_pass_with_stats(
    stream: &mut dyn RowStream,
    d: usize,
    seed: u64,
) -> Result<(Sketch, StreamStats)> {
    if !stream.is_replayable() {
        return Err(Error::NotReplayable);
    }
    check_d(d)?;
    let summary = weight_pass(stream, None)?;
    let positions = draw_positions(&summary, d, seed)?;
    let (sketch, peak) = materialize_pass(stream, &summary, &positions, seed)?;
    let stats =
        StreamStats { passes: 2, rows_seen: summary.row_ids.len(), peak_resident_rows: peak };
    Ok((sketch, stats))
}

/// Row held by one or more reservoirs.
struct Held {
    index: usize,
    weight: f64,
    values: Vec<f64>,
}

/// One-pass sampler: `d` independent single-item weighted reservoirs.
///
/// Reservoir `r` replaces its occupant by row `j` with probability `w_j / W_j`,
/// where `w_j = ‖x_j‖₂²` and `W_j` is the running total including `w_j`. After
/// the pass each occupant is distributed as [`row_distribution`], independently
/// across reservoirs.
pub fn sample_sketch_one_pass(stream: &mut dyn RowStream, d: usize, seed: u64) -> Result<Sketch> {
    sample_sketch_one_pass_with_stats(stream, d, seed).map(|(s, _)| s)
}

pub fn sample_sketch_one_pass_with_stats(
    stream: &mut dyn RowStream,
    d: usize,
    seed: u64,
) -> Result<(Sketch, StreamStats)> {
    check_d(d)?;
    let n = stream.ncols();
    let mut rng = derive_rng(seed, STREAM_ONE_PASS);
    let mut reservoirs: Vec<Option<Rc<Held>>> = vec![None; d];
    let mut running = NeumaierSum::default();
    let mut live = 0usize;
    let mut peak = 0usize;
    let mut rows_seen = 0usize;
    let mut takers: Vec<usize> = Vec::with_capacity(d);
    checked_traverse(stream, &mut |idx, row| {
        rows_seen += 1;
        peak = peak.max(live + 1);
        let w = squared_norm(row);
        if w == 0.0 {
            return Ok(());
        }
        running.add(w);
        let accept = w / running.value();
        takers.clear();
        for r in 0..d {
            if rng.random::<f64>() < accept {
                takers.push(r);
            }
        }
        if takers.is_empty() {
            return Ok(());
        }
        let held = Rc::new(Held { index: idx, weight: w, values: row.to_vec() });
        live += 1;
        for &r in &takers {
            if let Some(old) = reservoirs[r].replace(Rc::clone(&held)) {
                if Rc::strong_count(&old) == 1 {
                    live -= 1;
                }
            }
        }
        Ok(())
    })?;
    let total = running.value();
    if total <= 0.0 {
        return Err(Error::ZeroMatrix);
    }
    let frob = total.sqrt();
    let mut data = vec![0.0; d * n];
    let mut chosen = Vec::with_capacity(d);
    let mut probabilities = Vec::with_capacity(d);
    for (slot, occupant) in reservoirs.iter().enumerate() {
        let held = occupant.as_ref().expect("positive total weight fills every reservoir");
        rescale_into(&mut data[slot * n..(slot + 1) * n], &held.values, frob, held.weight, d);
        chosen.push(held.index);
        probabilities.push(held.weight / total);
    }
    let sketch = Sketch {
        matrix: DenseMatrix::new(d, n, data)?,
        chosen_indices: chosen,
        probabilities,
        frobenius_of_source: frob,
        d,
        seed,
    };
    Ok((sketch, StreamStats { passes: 1, rows_seen, peak_resident_rows: peak }))
}

/// Default for the unspecified absolute constant in the sample-size formula.
pub const DEFAULT_C_CONSTANT: f64 = 1.0;

/// Inputs to [`required_sample_size`].
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub r: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub c_constant: f64,
    pub d: usize,
}

impl SamplingPlan {
    pub fn new(r: f64, epsilon: f64, delta: f64, c_constant: f64) -> Result<Self> {
        let d = required_sample_size(r, epsilon, delta, c_constant)?;
        Ok(Self { r, epsilon, delta, c_constant, d })
    }
}

/// `⌈C·t·ln(max(t, e))⌉` with `t = r/(ε⁴δ)`.
///
/// Values within `1e-12` relative of an integer are not bumped to the next one,
/// so floating-point noise in `t` cannot add a sample.
pub fn required_sample_size(r: f64, epsilon: f64, delta: f64, c_constant: f64) -> Result<usize> {
    if !(r >= 1.0 && r.is_finite()) {
        return Err(Error::OutOfRange(format!("numerical rank r = {r} must be >= 1")));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::OutOfRange(format!("epsilon = {epsilon} must lie in (0, 1)")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::OutOfRange(format!("delta = {delta} must lie in (0, 1)")));
    }
    if !(c_constant > 0.0 && c_constant.is_finite()) {
        return Err(Error::OutOfRange(format!("constant C = {c_constant} must be positive")));
    }
    let t = r / (epsilon.powi(4) * delta);
    let raw = c_constant * t * t.max(std::f64::consts::E).ln();
    if !raw.is_finite() || raw >= usize::MAX as f64 {
        return Err(Error::OutOfRange(format!("sample size {raw} is not representable")));
    }
    Ok((snap_ceil(raw) as usize).max(1))
}
