use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// How rows are rescaled on ingestion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalize {
    #[default]
    None,
    UnitRows,
}

/// Shape of the matrix before [`DataMatrix::pad_square`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PadSpec {
    pub original_rows: usize,
    pub original_cols: usize,
}

/// An m×n data matrix with one sample per row and cached norms.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    entries: DMatrix<f64>,
    row_norms: Vec<f64>,
    frobenius_norm: f64,
    h: f64,
    pad: PadSpec,
}

impl DataMatrix {
    /// Builds a matrix and computes its norms. Entries must be finite.
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        if entries.nrows() == 0 || entries.ncols() == 0 {
            return Err(Error::EmptyInput);
        }
        for i in 0..entries.nrows() {
            for j in 0..entries.ncols() {
                if !entries[(i, j)].is_finite() {
                    return Err(Error::Value {
                        row: i,
                        col: j,
                        message: format!("non-finite entry {}", entries[(i, j)]),
                    });
                }
            }
        }
        let pad = PadSpec {
            original_rows: entries.nrows(),
            original_cols: entries.ncols(),
        };
        Ok(Self::with_pad(entries, pad))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let first = rows.first().ok_or(Error::EmptyInput)?;
        let n = first.len();
        for (i, r) in rows.iter().enumerate() {
            if r.len() != n {
                return Err(Error::Format {
                    line: i + 1,
                    message: format!("expected {n} columns, found {}", r.len()),
                });
            }
        }
        Self::new(DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]))
    }

    fn with_pad(entries: DMatrix<f64>, pad: PadSpec) -> Self {
        let row_norms: Vec<f64> = (0..entries.nrows())
            .map(|i| entries.row(i).iter().map(|x| x * x).sum::<f64>().sqrt())
            .collect();
        let frobenius_norm = row_norms.iter().map(|r| r * r).sum::<f64>().sqrt();
        let h = row_norms.iter().copied().fold(0.0, f64::max);
        Self {
            entries,
            row_norms,
            frobenius_norm,
            h,
            pad,
        }
    }

    pub fn rows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn cols(&self) -> usize {
        self.entries.ncols()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn row(&self, i: usize) -> DVector<f64> {
        self.entries.row(i).transpose()
    }

    pub fn row_norms(&self) -> &[f64] {
        &self.row_norms
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.frobenius_norm
    }

    /// Largest row norm.
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn pad_spec(&self) -> PadSpec {
        self.pad
    }

    /// Squared Euclidean distance between rows `i` and `j`.
    pub fn dist2(&self, i: usize, j: usize) -> f64 {
        (0..self.cols())
            .map(|c| {
                let d = self.entries[(i, c)] - self.entries[(j, c)];
                d * d
            })
            .sum()
    }

    /// Smallest nonzero pairwise distance, or `None` if all points coincide.
    pub fn min_nonzero_distance(&self) -> Option<f64> {
        let mut best = f64::INFINITY;
        for i in 0..self.rows() {
            for j in i + 1..self.rows() {
                let d = self.dist2(i, j);
                if d > 0.0 && d < best {
                    best = d;
                }
            }
        }
        best.is_finite().then(|| best.sqrt())
    }

    /// Rescales each nonzero row to unit norm. Zero rows stay zero.
    pub fn normalized(&self) -> Self {
        let mut e = self.entries.clone();
        for (i, &norm) in self.row_norms.iter().enumerate() {
            if norm > 0.0 {
                let mut r = e.row_mut(i);
                r /= norm;
            }
        }
        Self::with_pad(e, self.pad)
    }

    /// Zero-pads to a square matrix of side max(m, n). A square input is
    /// returned unchanged.
    pub fn pad_square(&self) -> Self {
        let side = self.rows().max(self.cols());
        if self.rows() == self.cols() {
            return self.clone();
        }
        let mut e = DMatrix::zeros(side, side);
        e.view_mut((0, 0), (self.rows(), self.cols()))
            .copy_from(&self.entries);
        Self::with_pad(e, self.pad)
    }

    /// Rows in nested-vector form.
    /// SHA-256 over the shape and the row-major bit patterns of the entries.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.rows() as u64).to_le_bytes());
        h.update((self.cols() as u64).to_le_bytes());
        for i in 0..self.rows() {
            for j in 0..self.cols() {
                h.update(self.entries[(i, j)].to_bits().to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        crate::linalg::to_rows(&self.entries)
    }
}

/// Reads a comma-separated matrix. With `header` set the first line is
/// skipped.
pub fn ingest_csv(path: &Path, normalize: Normalize, header: bool) -> Result<DataMatrix> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let line = record
            .position()
            .map_or(r + 1 + usize::from(header), |p| p.line() as usize);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        let w = *width.get_or_insert(record.len());
        if record.len() != w {
            return Err(Error::Format {
                line,
                message: format!("expected {w} fields, found {}", record.len()),
            });
        }
        let row_idx = rows.len();
        let row = record
            .iter()
            .enumerate()
            .map(|(c, field)| {
                let v: f64 = field.parse().map_err(|_| Error::Value {
                    row: row_idx,
                    col: c,
                    message: format!("cannot parse `{field}` as a number"),
                })?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::Value {
                        row: row_idx,
                        col: c,
                        message: format!("non-finite entry `{field}`"),
                    })
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput);
    }
    let x = DataMatrix::from_rows(&rows)?;
    Ok(match normalize {
        Normalize::None => x,
        Normalize::UnitRows => x.normalized(),
    })
}

/// Writes a matrix as CSV using shortest round-trip number formatting, so that
/// reading it back reproduces every entry bit for bit.
pub fn emit_csv(m: &DMatrix<f64>, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for i in 0..m.nrows() {
        let line: Vec<String> = m.row(i).iter().map(|v| format!("{v:?}")).collect();
        writeln!(w, "{}", line.join(",")).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
