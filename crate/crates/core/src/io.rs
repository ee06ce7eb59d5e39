//! Matrix files: MatrixMarket (array and coordinate), CSV with one row per
//! line, and a raw little-endian binary layout (`u64 m`, `u64 n`, then `m·n`
//! `f64` values row-major).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::stream::{OwnedRowStream, RowStream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatrixFormat {
    MatrixMarket,
    Csv,
    Binary,
    Auto,
}

impl FromStr for MatrixFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "matrixmarket" | "mtx" => Ok(Self::MatrixMarket),
            "csv" => Ok(Self::Csv),
            "binary" | "bin" => Ok(Self::Binary),
            "auto" => Ok(Self::Auto),
            other => Err(Error::OutOfRange(format!("unknown matrix format {other:?}"))),
        }
    }
}

const BINARY_HEADER: u64 = 16;
const MM_BANNER: &str = "%%matrixmarket";

/// Resolves [`MatrixFormat::Auto`] from the extension, then from the content.
pub fn detect_format(path: &Path) -> Result<MatrixFormat> {
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("mtx" | "mm") => return Ok(MatrixFormat::MatrixMarket),
        Some("csv") => return Ok(MatrixFormat::Csv),
        Some("bin") => return Ok(MatrixFormat::Binary),
        _ => {}
    }
    let mut head = Vec::new();
    File::open(path)?.take(64).read_to_end(&mut head)?;
    if String::from_utf8_lossy(&head).to_ascii_lowercase().starts_with(MM_BANNER) {
        return Ok(MatrixFormat::MatrixMarket);
    }
    if head.len() >= BINARY_HEADER as usize {
        let m = u64::from_le_bytes(head[0..8].try_into().expect("8 bytes"));
        let n = u64::from_le_bytes(head[8..16].try_into().expect("8 bytes"));
        let len = std::fs::metadata(path)?.len();
        let expected = m.checked_mul(n).and_then(|c| c.checked_mul(8)).and_then(|b| b.checked_add(BINARY_HEADER));
        if m > 0 && n > 0 && expected == Some(len) {
            return Ok(MatrixFormat::Binary);
        }
    }
    Ok(MatrixFormat::Csv)
}

fn resolve(path: &Path, format: MatrixFormat) -> Result<MatrixFormat> {
    match format {
        MatrixFormat::Auto => detect_format(path),
        f => Ok(f),
    }
}

/// Reads a whole matrix into memory.
pub fn read_matrix(path: &Path, format: MatrixFormat) -> Result<DenseMatrix> {
    match resolve(path, format)? {
        MatrixFormat::MatrixMarket => parse_matrix_market(BufReader::new(File::open(path)?)),
        MatrixFormat::Csv => parse_csv(File::open(path)?),
        MatrixFormat::Binary => read_binary(File::open(path)?),
        MatrixFormat::Auto => unreachable!("resolved above"),
    }
}

/// Row stream over a file. CSV and binary files are re-read on every pass;
/// MatrixMarket files are assembled in memory first, since coordinate entries
/// may arrive in any order.
pub fn open_row_stream(path: &Path, format: MatrixFormat) -> Result<Box<dyn RowStream>> {
    Ok(match resolve(path, format)? {
        MatrixFormat::MatrixMarket => Box::new(OwnedRowStream(read_matrix(path, MatrixFormat::MatrixMarket)?)),
        MatrixFormat::Csv => Box::new(CsvRowStream::open(path)?),
        MatrixFormat::Binary => Box::new(BinaryRowStream::open(path)?),
        MatrixFormat::Auto => unreachable!("resolved above"),
    })
}

/// `(m, n)` without loading the data where the format allows.
pub fn read_shape(path: &Path, format: MatrixFormat) -> Result<(usize, usize)> {
    match resolve(path, format)? {
        MatrixFormat::Binary => BinaryRowStream::open(path).map(|s| (s.rows, s.cols)),
        f => read_matrix(path, f).map(|a| a.shape()),
    }
}

/// Lowercase hex SHA-256 of the file contents.
pub fn file_digest(path: &Path) -> Result<String> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let got = reader.read(&mut buf)?;
        if got == 0 {
            break;
        }
        hasher.update(&buf[..got]);
    }
    Ok(hex::encode(hasher.finalize()))
}

fn parse_error(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

#[derive(Clone, Copy, PartialEq)]
enum Symmetry {
    General,
    Symmetric,
    SkewSymmetric,
}

/// Parses a real, integer or pattern MatrixMarket file. Coordinate files are
/// 1-based; a repeated position is an error.
pub fn parse_matrix_market<R: BufRead>(reader: R) -> Result<DenseMatrix> {
    let mut lines = reader.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, banner) = lines.next().ok_or(Error::Empty)?;
    let banner = banner?;
    let words: Vec<String> = banner.split_whitespace().map(str::to_ascii_lowercase).collect();
    if words.len() != 5 || words[0] != MM_BANNER || words[1] != "matrix" {
        return Err(parse_error(1, "expected '%%MatrixMarket matrix <layout> <field> <symmetry>'"));
    }
    let coordinate = match words[2].as_str() {
        "coordinate" => true,
        "array" => false,
        other => return Err(parse_error(1, format!("unsupported layout {other:?}"))),
    };
    let pattern = match words[3].as_str() {
        "real" | "integer" | "double" => false,
        "pattern" if coordinate => true,
        other => return Err(parse_error(1, format!("unsupported field {other:?}"))),
    };
    let symmetry = match words[4].as_str() {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        "skew-symmetric" => Symmetry::SkewSymmetric,
        other => return Err(parse_error(1, format!("unsupported symmetry {other:?}"))),
    };

    let mut content = lines.filter_map(|(no, l)| match l {
        Ok(s) if s.trim().is_empty() || s.trim_start().starts_with('%') => None,
        Ok(s) => Some(Ok((no, s))),
        Err(e) => Some(Err(Error::from(e))),
    });
    let (size_line, size) = content.next().ok_or_else(|| parse_error(1, "missing size line"))??;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| parse_error(size_line, format!("bad size entry {t:?}"))))
        .collect::<Result<_>>()?;
    let want = if coordinate { 3 } else { 2 };
    if dims.len() != want {
        return Err(parse_error(size_line, format!("size line needs {want} integers")));
    }
    let (m, n) = (dims[0], dims[1]);
    if m == 0 || n == 0 {
        return Err(parse_error(size_line, "matrix dimensions must be positive"));
    }
    if symmetry != Symmetry::General && m != n {
        return Err(parse_error(size_line, "symmetric storage requires a square matrix"));
    }
    let mut data = vec![0.0; m * n];
    let parse_value = |tok: &str, line: usize| -> Result<f64> {
        tok.parse::<f64>().map_err(|_| parse_error(line, format!("bad value {tok:?}")))
    };
    let mirror = |data: &mut [f64], i: usize, j: usize, v: f64| {
        if i != j {
            match symmetry {
                Symmetry::General => {}
                Symmetry::Symmetric => data[j * n + i] = v,
                Symmetry::SkewSymmetric => data[j * n + i] = -v,
            }
        }
    };

    if coordinate {
        let nnz = dims[2];
        let mut seen = std::collections::HashSet::with_capacity(nnz);
        let mut count = 0usize;
        for item in content {
            let (no, line) = item?;
            count += 1;
            if count > nnz {
                return Err(parse_error(no, format!("more than the declared {nnz} entries")));
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() != if pattern { 2 } else { 3 } {
                return Err(parse_error(no, "wrong number of fields in entry"));
            }
            let idx = |t: &str, bound: usize| -> Result<usize> {
                match t.parse::<usize>() {
                    Ok(v) if (1..=bound).contains(&v) => Ok(v - 1),
                    _ => Err(parse_error(no, format!("index {t:?} outside 1..={bound}"))),
                }
            };
            let (i, j) = (idx(toks[0], m)?, idx(toks[1], n)?);
            let v = if pattern { 1.0 } else { parse_value(toks[2], no)? };
            if symmetry == Symmetry::SkewSymmetric && i == j {
                return Err(parse_error(no, "skew-symmetric matrix stores a diagonal entry"));
            }
            let key = if symmetry == Symmetry::General { (i, j) } else { (i.max(j), i.min(j)) };
            if !seen.insert(key) {
                return Err(parse_error(no, format!("duplicate entry ({}, {})", i + 1, j + 1)));
            }
            let v = if symmetry == Symmetry::SkewSymmetric && i < j { -v } else { v };
            let (i, j) = key;
            data[i * n + j] = v;
            mirror(&mut data, i, j, v);
        }
        if count != nnz {
            return Err(parse_error(0, format!("declared {nnz} entries, found {count}")));
        }
    } else {
        // Column-major; symmetric layouts store the lower triangle only.
        let positions: Vec<(usize, usize)> = match symmetry {
            Symmetry::General => (0..n).flat_map(|j| (0..m).map(move |i| (i, j))).collect(),
            Symmetry::Symmetric => (0..n).flat_map(|j| (j..m).map(move |i| (i, j))).collect(),
            Symmetry::SkewSymmetric => (0..n).flat_map(|j| (j + 1..m).map(move |i| (i, j))).collect(),
        };
        let mut next = positions.iter();
        for item in content {
            let (no, line) = item?;
            for tok in line.split_whitespace() {
                let &(i, j) = next
                    .next()
                    .ok_or_else(|| parse_error(no, format!("more than the expected {} values", positions.len())))?;
                let v = parse_value(tok, no)?;
                data[i * n + j] = v;
                mirror(&mut data, i, j, v);
            }
        }
        if next.next().is_some() {
            return Err(parse_error(0, format!("expected {} values, file ended early", positions.len())));
        }
    }
    DenseMatrix::new(m, n, data)
}

fn csv_reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(input)
}

fn csv_row(record: &csv::StringRecord, expected: Option<usize>) -> Result<Vec<f64>> {
    let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
    if let Some(n) = expected {
        if record.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "line {line} has {} fields, earlier rows have {n}",
                record.len()
            )));
        }
    }
    record
        .iter()
        .map(|t| t.parse::<f64>().map_err(|_| parse_error(line, format!("bad value {t:?}"))))
        .collect()
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => parse_error(line, format!("{other:?}")),
    }
}

pub fn parse_csv<R: Read>(input: R) -> Result<DenseMatrix> {
    let mut rows = 0;
    let mut width = None;
    let mut data = Vec::new();
    for record in csv_reader(input).records() {
        let row = csv_row(&record.map_err(csv_error)?, width)?;
        width = Some(row.len());
        data.extend(row);
        rows += 1;
    }
    let n = width.ok_or(Error::Empty)?;
    DenseMatrix::new(rows, n, data)
}

pub fn read_binary<R: Read>(input: R) -> Result<DenseMatrix> {
    let mut reader = BufReader::new(input);
    let (m, n) = read_binary_header(&mut reader, None)?;
    let mut data = vec![0.0; m * n];
    let mut buf = [0u8; 8];
    for (k, slot) in data.iter_mut().enumerate() {
        reader.read_exact(&mut buf).map_err(|_| Error::BinaryFormat {
            offset: BINARY_HEADER + 8 * k as u64,
            msg: format!("expected {} values", m * n),
        })?;
        *slot = f64::from_le_bytes(buf);
    }
    if reader.read(&mut buf)? != 0 {
        return Err(Error::ShapeMismatch(format!("trailing bytes after {m}x{n} values")));
    }
    DenseMatrix::new(m, n, data)
}

fn read_binary_header<R: Read>(reader: &mut R, file_len: Option<u64>) -> Result<(usize, usize)> {
    let mut head = [0u8; 16];
    reader.read_exact(&mut head).map_err(|_| Error::BinaryFormat {
        offset: 0,
        msg: "file shorter than the 16-byte header".into(),
    })?;
    let m = u64::from_le_bytes(head[0..8].try_into().expect("8 bytes"));
    let n = u64::from_le_bytes(head[8..16].try_into().expect("8 bytes"));
    if m == 0 || n == 0 {
        return Err(Error::BinaryFormat { offset: 0, msg: format!("header declares a {m}x{n} matrix") });
    }
    if let Some(len) = file_len {
        let expected = m.checked_mul(n).and_then(|c| c.checked_mul(8)).and_then(|b| b.checked_add(BINARY_HEADER));
        if expected != Some(len) {
            return Err(Error::ShapeMismatch(format!("header declares {m}x{n} but file holds {len} bytes")));
        }
    }
    Ok((m as usize, n as usize))
}

pub fn write_binary(path: &Path, a: &DenseMatrix) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&(a.nrows() as u64).to_le_bytes())?;
    w.write_all(&(a.ncols() as u64).to_le_bytes())?;
    for x in a.as_slice() {
        w.write_all(&x.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Values are written in shortest round-trip form, so reading back is exact.
pub fn write_csv(path: &Path, a: &DenseMatrix) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for row in a.rows_iter() {
        let line: Vec<String> = row.iter().map(f64::to_string).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_matrix_market(path: &Path, a: &DenseMatrix) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "%%MatrixMarket matrix array real general")?;
    writeln!(w, "{} {}", a.nrows(), a.ncols())?;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            writeln!(w, "{}", a.get(i, j))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Replayable stream over a CSV file; each pass reopens the file.
pub struct CsvRowStream {
    path: PathBuf,
    cols: usize,
}

impl CsvRowStream {
    pub fn open(path: &Path) -> Result<Self> {
        let mut reader = csv_reader(File::open(path)?);
        let first = reader.records().next().ok_or(Error::Empty)?.map_err(csv_error)?;
        Ok(Self { path: path.to_path_buf(), cols: first.len() })
    }
}

impl RowStream for CsvRowStream {
    fn ncols(&self) -> usize {
        self.cols
    }

    fn is_replayable(&self) -> bool {
        true
    }

    fn traverse(&mut self, visit: &mut dyn FnMut(usize, &[f64]) -> Result<()>) -> Result<()> {
        for (i, record) in csv_reader(File::open(&self.path)?).records().enumerate() {
            let row = csv_row(&record.map_err(csv_error)?, Some(self.cols))?;
            visit(i, &row)?;
        }
        Ok(())
    }
}

/// Replayable stream over a binary matrix file; each pass reopens the file.
pub struct BinaryRowStream {
    path: PathBuf,
    rows: usize,
    cols: usize,
}

impl BinaryRowStream {
    pub fn open(path: &Path) -> Result<Self> {
        let len = std::fs::metadata(path)?.len();
        let (rows, cols) = read_binary_header(&mut File::open(path)?, Some(len))?;
        Ok(Self { path: path.to_path_buf(), rows, cols })
    }
}

impl RowStream for BinaryRowStream {
    fn ncols(&self) -> usize {
        self.cols
    }

    fn is_replayable(&self) -> bool {
        true
    }

    fn traverse(&mut self, visit: &mut dyn FnMut(usize, &[f64]) -> Result<()>) -> Result<()> {
        let mut reader = BufReader::new(File::open(&self.path)?);
        read_binary_header(&mut reader, None)?;
        let mut bytes = vec![0u8; 8 * self.cols];
        let mut row = vec![0.0; self.cols];
        for i in 0..self.rows {
            reader.read_exact(&mut bytes).map_err(|_| Error::BinaryFormat {
                offset: BINARY_HEADER + (8 * i * self.cols) as u64,
                msg: "file truncated".into(),
            })?;
            for (x, chunk) in row.iter_mut().zip(bytes.chunks_exact(8)) {
                *x = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
            }
            visit(i, &row)?;
        }
        Ok(())
    }
}
