//! Tabular datasets: predictor rows plus a scalar response.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{DriftError, Result};

/// Predictor matrix (row-major, `n × p`) and response vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    p: usize,
    x: Vec<f64>,
    y: Vec<f64>,
}

impl Dataset {
    pub fn new(p: usize, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if p == 0 {
            return Err(DriftError::Input("dataset needs at least one predictor".into()));
        }
        if x.len() != p * y.len() {
            return Err(DriftError::Input(format!(
                "predictor buffer has {} values, expected {} rows × {} columns",
                x.len(),
                y.len(),
                p
            )));
        }
        Ok(Self { p, x, y })
    }

    pub fn from_rows(rows: &[Vec<f64>], y: Vec<f64>) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return Err(DriftError::Input("ragged predictor rows".into()));
        }
        Self::new(p, rows.concat(), y)
    }

    pub fn empty(p: usize) -> Self {
        Self { p, x: Vec::new(), y: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Number of predictor columns.
    pub fn n_features(&self) -> usize {
        self.p
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    pub fn response(&self, i: usize) -> f64 {
        self.y[i]
    }

    pub fn responses(&self) -> &[f64] {
        &self.y
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.x.chunks_exact(self.p).zip(self.y.iter().copied())
    }

    pub fn push(&mut self, row: &[f64], y: f64) {
        assert_eq!(row.len(), self.p, "row width");
        self.x.extend_from_slice(row);
        self.y.push(y);
    }

    /// Rows at `indices`, in that order (repeats allowed).
    pub fn select(&self, indices: &[usize]) -> Dataset {
        let mut out = Dataset {
            p: self.p,
            x: Vec::with_capacity(indices.len() * self.p),
            y: Vec::with_capacity(indices.len()),
        };
        for &i in indices {
            out.push(self.row(i), self.y[i]);
        }
        out
    }

    /// Split into the first `k` rows and the rest.
    pub fn split_at(&self, k: usize) -> (Dataset, Dataset) {
        let k = k.min(self.len());
        let head = Dataset { p: self.p, x: self.x[..k * self.p].to_vec(), y: self.y[..k].to_vec() };
        let tail = Dataset { p: self.p, x: self.x[k * self.p..].to_vec(), y: self.y[k..].to_vec() };
        (head, tail)
    }

    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        if other.p != self.p {
            return Err(DriftError::Dimension { expected: self.p, got: other.p });
        }
        let mut out = self.clone();
        out.x.extend_from_slice(&other.x);
        out.y.extend_from_slice(&other.y);
        Ok(out)
    }

    pub fn ensure_finite(&self) -> Result<()> {
        if let Some(pos) = self.x.iter().chain(&self.y).position(|v| !v.is_finite()) {
            return Err(DriftError::Input(format!("non-finite value at position {pos}")));
        }
        Ok(())
    }

    /// Write as CSV with header `x1,...,xp,y`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
        let mut header: Vec<String> = (1..=self.p).map(|j| format!("x{j}")).collect();
        header.push("y".into());
        w.write_record(&header)?;
        for (row, y) in self.iter() {
            w.write_record(row.iter().chain(std::iter::once(&y)).map(|v| format_f64(*v)))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Read CSV whose last column is the response. Lines starting with `#` are skipped.
    pub fn read_csv<R: Read>(reader: R) -> Result<Dataset> {
        let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(reader);
        let width = r.headers()?.len();
        if width < 2 {
            return Err(DriftError::Input("dataset CSV needs at least one predictor and a response".into()));
        }
        let mut out = Dataset::empty(width - 1);
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let vals: Vec<f64> = rec
                .iter()
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| DriftError::Input(format!("row {}: {e}", line + 1)))?;
            if vals.len() != width {
                return Err(DriftError::Input(format!("row {} has {} fields, expected {width}", line + 1, vals.len())));
            }
            out.push(&vals[..width - 1], vals[width - 1]);
        }
        out.ensure_finite()?;
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<Dataset> {
        Dataset::read_csv(std::fs::File::open(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }
}

/// Shortest decimal text that round-trips to the same `f64`.
pub fn format_f64(v: f64) -> String {
    format!("{v:?}")
}
