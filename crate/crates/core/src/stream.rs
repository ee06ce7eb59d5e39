//! Row-by-row access to a matrix that may not fit in memory.

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

/// An ordered source of `(row_index, row)` records.
///
/// Each call to [`RowStream::traverse`] is one pass over the data. Row indices
/// are strictly increasing and every row has exactly [`RowStream::ncols`]
/// entries. A stream that is not replayable fails the second traversal with
/// [`Error::NotReplayable`].
pub trait RowStream {
    fn ncols(&self) -> usize;
    fn is_replayable(&self) -> bool;
    fn traverse(&mut self, visit: &mut dyn FnMut(usize, &[f64]) -> Result<()>) -> Result<()>;
}

/// Runs one pass, checking the ordering and width contract on the way.
pub fn checked_traverse(
    stream: &mut dyn RowStream,
    visit: &mut dyn FnMut(usize, &[f64]) -> Result<()>,
) -> Result<()> {
    let n = stream.ncols();
    let mut last: Option<usize> = None;
    stream.traverse(&mut |idx, row| {
        if let Some(prev) = last {
            if idx <= prev {
                return Err(Error::InvalidStream(format!(
                    "row index {idx} follows {prev}; indices must increase"
                )));
            }
        }
        if row.len() != n {
            return Err(Error::InvalidStream(format!(
                "row {idx} has {} entries, expected {n}",
                row.len()
            )));
        }
        if row.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidStream(format!("row {idx} has a non-finite entry")));
        }
        last = Some(idx);
        visit(idx, row)
    })
}

/// Replayable stream over an in-memory matrix.
pub struct MatrixRowStream<'a> {
    matrix: &'a DenseMatrix,
}

impl<'a> MatrixRowStream<'a> {
    pub fn new(matrix: &'a DenseMatrix) -> Self {
        Self { matrix }
    }
}

impl RowStream for MatrixRowStream<'_> {
    fn ncols(&self) -> usize {
        self.matrix.ncols()
    }

    fn is_replayable(&self) -> bool {
        true
    }

    fn traverse(&mut self, visit: &mut dyn FnMut(usize, &[f64]) -> Result<()>) -> Result<()> {
        for (i, row) in self.matrix.rows_iter().enumerate() {
            visit(i, row)?;
        }
        Ok(())
    }
}

/// Replayable stream that owns its matrix.
pub struct OwnedRowStream(pub DenseMatrix);

impl RowStream for OwnedRowStream {
    fn ncols(&self) -> usize {
        self.0.ncols()
    }

    fn is_replayable(&self) -> bool {
        true
    }

    fn traverse(&mut self, visit: &mut dyn FnMut(usize, &[f64]) -> Result<()>) -> Result<()> {
        MatrixRowStream::new(&self.0).traverse(visit)
    }
}

/// Replayable stream whose rows are produced on demand and never stored.
pub struct GeneratedRowStream<F> {
    rows: usize,
    cols: usize,
    make_row: F,
    buf: Vec<f64>,
}

impl<F: FnMut(usize, &mut [f64])> GeneratedRowStream<F> {
    /// `make_row(i, buf)` fills `buf` with row `i`.
    pub fn new(rows: usize, cols: usize, make_row: F) -> Self {
        Self { rows, cols, make_row, buf: vec![0.0; cols] }
    }
}

impl<F: FnMut(usize, &mut [f64])> RowStream for GeneratedRowStream<F> {
    fn ncols(&self) -> usize {
        self.cols
    }

    fn is_replayable(&self) -> bool {
        true
    }

    fn traverse(&mut self, visit: &mut dyn FnMut(usize, &[f64]) -> Result<()>) -> Result<()> {
        for i in 0..self.rows {
            (self.make_row)(i, &mut self.buf);
            visit(i, &self.buf)?;
        }
        Ok(())
    }
}

/// Wraps a stream so that it can be traversed only once.
pub struct SingleShot<S> {
    inner: S,
    consumed: bool,
}

impl<S: RowStream> SingleShot<S> {
    pub fn new(inner: S) -> Self {
        Self { inner, consumed: false }
    }
}

impl<S: RowStream> RowStream for SingleShot<S> {
    fn ncols(&self) -> usize {
        self.inner.ncols()
    }

    fn is_replayable(&self) -> bool {
        false
    }

    fn traverse(&mut self, visit: &mut dyn FnMut(usize, &[f64]) -> Result<()>) -> Result<()> {
        if self.consumed {
            return Err(Error::NotReplayable);
        }
        self.consumed = true;
        self.inner.traverse(visit)
    }
}

/// Reads a whole stream into memory. Gaps in the row indices become zero rows.
pub fn collect_matrix(stream: &mut dyn RowStream) -> Result<DenseMatrix> {
    let n = stream.ncols();
    let mut data = Vec::new();
    let mut next = 0usize;
    checked_traverse(stream, &mut |idx, row| {
        data.resize((idx - next) * n + data.len(), 0.0);
        data.extend_from_slice(row);
        next = idx + 1;
        Ok(())
    })?;
    DenseMatrix::new(next, n, data)
}
