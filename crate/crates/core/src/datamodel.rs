//! Labeled numeric matrices, CSV ingestion and column min-max scaling.
//!
//! [`DataMatrix`] is the carrier for everything numeric in the crate: raw
//! observations, technical-indicator tables and factor loadings. It is
//! immutable once built; every transform returns a new matrix.

use std::collections::HashSet;
use std::path::Path;

use chrono::NaiveDate;
use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    row_labels: Vec<String>,
    col_labels: Vec<String>,
    values: Array2<f64>,
}

impl DataMatrix {
    /// Builds a matrix, checking shape, finiteness and label uniqueness.
    pub fn new(row_labels: Vec<String>, col_labels: Vec<String>, values: Array2<f64>) -> Result<Self> {
        if values.nrows() != row_labels.len() || values.ncols() != col_labels.len() {
            return Err(Error::DimensionMismatch(format!(
                "values are {}x{} but there are {} row labels and {} column labels",
                values.nrows(),
                values.ncols(),
                row_labels.len(),
                col_labels.len()
            )));
        }
        if let Some(((i, j), v)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidMatrix(format!(
                "non-finite value {v} at row {i}, column {j}"
            )));
        }
        check_unique("row", &row_labels)?;
        check_unique("column", &col_labels)?;
        Ok(DataMatrix {
            row_labels,
            col_labels,
            values,
        })
    }

    /// Builds a matrix with synthesized `r0..` / `c0..` labels.
    pub fn from_values(values: Array2<f64>) -> Result<Self> {
        let rows = (0..values.nrows()).map(|i| format!("r{i}")).collect();
        let cols = (0..values.ncols()).map(|j| format!("c{j}")).collect();
        DataMatrix::new(rows, cols, values)
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nrows(), self.ncols())
    }

    pub fn is_empty(&self) -> bool {
        self.nrows() == 0 || self.ncols() == 0
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn row_labels(&self) -> &[String] {
        &self.row_labels
    }

    pub fn col_labels(&self) -> &[String] {
        &self.col_labels
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[[row, col]]
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.values.row(i)
    }

    pub fn column(&self, j: usize) -> ArrayView1<'_, f64> {
        self.values.column(j)
    }

    /// Same labels, new values of identical shape.
    pub fn with_values(&self, values: Array2<f64>) -> Result<Self> {
        DataMatrix::new(self.row_labels.clone(), self.col_labels.clone(), values)
    }

    /// Rows selected by index, labels carried along.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.nrows()) {
            return Err(Error::IndexOutOfBounds(format!(
                "row {bad} in a matrix with {} rows",
                self.nrows()
            )));
        }
        let values = self.values.select(ndarray::Axis(0), rows);
        let labels = rows.iter().map(|&r| self.row_labels[r].clone()).collect();
        DataMatrix::new(labels, self.col_labels.clone(), values)
    }

    /// Writes the matrix as CSV with a `label` column followed by the column labels.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        out.push_str("label");
        for c in &self.col_labels {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for (i, label) in self.row_labels.iter().enumerate() {
            out.push_str(label);
            for v in self.values.row(i) {
                out.push(',');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }
}

fn check_unique(kind: &str, labels: &[String]) -> Result<()> {
    let mut seen = HashSet::with_capacity(labels.len());
    for l in labels {
        if !seen.insert(l.as_str()) {
            return Err(Error::InvalidMatrix(format!("duplicate {kind} label {l:?}")));
        }
    }
    Ok(())
}

/// Accepts `YYYY-MM-DD` or `YYYY/MM/DD` and returns the ISO form.
pub fn normalize_date(s: &str) -> Option<String> {
    let s = s.trim();
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .or_else(|_| NaiveDate::parse_from_str(s, "%Y/%m/%d"))
        .ok()
        .map(|d| d.format("%Y-%m-%d").to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CsvOptions {
    pub has_header: bool,
    pub label_column: Option<usize>,
}

impl Default for CsvOptions {
    fn default() -> Self {
        CsvOptions {
            has_header: true,
            label_column: None,
        }
    }
}

pub fn load_csv_matrix(path: impl AsRef<Path>, has_header: bool, label_column: Option<usize>) -> Result<DataMatrix> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv_matrix(
        &text,
        CsvOptions {
            has_header,
            label_column,
        },
    )
}

/// Parses CSV text into a [`DataMatrix`].
///
/// Error positions are 1-based: `row` counts data rows (the header is not
/// row 1) and `column` counts fields as they appear in the file.
pub fn parse_csv_matrix(text: &str, opts: CsvOptions) -> Result<DataMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let mut records = reader.records();
    let header = if opts.has_header {
        match records.next() {
            Some(r) => Some(r.map_err(|e| csv_err(0, e))?),
            None => return Err(Error::InvalidMatrix("empty CSV input".into())),
        }
    } else {
        None
    };

    let mut width = header.as_ref().map(|h| h.len());
    let mut row_labels = Vec::new();
    let mut data = Vec::new();
    let mut nrows = 0usize;
    for (k, rec) in records.enumerate() {
        let row = k + 1;
        let rec = rec.map_err(|e| csv_err(row, e))?;
        if rec.len() == 1 && rec.get(0).is_some_and(str::is_empty) {
            continue;
        }
        let expected = *width.get_or_insert(rec.len());
        if rec.len() != expected {
            return Err(Error::RaggedRow {
                row,
                expected,
                found: rec.len(),
            });
        }
        if let Some(lc) = opts.label_column {
            if lc >= expected {
                return Err(Error::InvalidParameter(format!(
                    "label column {lc} but rows have {expected} fields"
                )));
            }
        }
        for (j, cell) in rec.iter().enumerate() {
            if Some(j) == opts.label_column {
                row_labels.push(normalize_date(cell).unwrap_or_else(|| cell.to_string()));
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| Error::ParseNumber {
                row,
                column: j + 1,
                value: cell.to_string(),
            })?;
            if !v.is_finite() {
                return Err(Error::ParseNumber {
                    row,
                    column: j + 1,
                    value: cell.to_string(),
                });
            }
            data.push(v);
        }
        nrows += 1;
    }

    let width = width.unwrap_or(0);
    let ncols = width - usize::from(opts.label_column.is_some() && width > 0);
    if nrows == 0 || ncols == 0 {
        return Err(Error::InvalidMatrix("CSV contains no numeric data".into()));
    }
    let col_labels: Vec<String> = match &header {
        Some(h) => h
            .iter()
            .enumerate()
            .filter(|(j, _)| Some(*j) != opts.label_column)
            .map(|(_, s)| s.to_string())
            .collect(),
        None => (0..ncols).map(|j| format!("c{j}")).collect(),
    };
    if opts.label_column.is_none() {
        row_labels = (0..nrows).map(|i| format!("r{i}")).collect();
    }
    let values = Array2::from_shape_vec((nrows, ncols), data)
        .map_err(|e| Error::InvalidMatrix(e.to_string()))?;
    DataMatrix::new(row_labels, col_labels, values)
}

fn csv_err(row: usize, e: csv::Error) -> Error {
    Error::Csv {
        row,
        message: e.to_string(),
    }
}

/// Per-column extremes recorded by [`minmax_normalize`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalizationParams {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl NormalizationParams {
    pub fn len(&self) -> usize {
        self.min.len()
    }

    pub fn is_empty(&self) -> bool {
        self.min.is_empty()
    }

    /// A column is degenerate when it was constant in the source matrix.
    pub fn is_degenerate(&self, col: usize) -> bool {
        self.max[col] <= self.min[col]
    }

    pub fn degenerate_columns(&self) -> Vec<usize> {
        (0..self.len()).filter(|&j| self.is_degenerate(j)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.min.len() != self.max.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} minima but {} maxima",
                self.min.len(),
                self.max.len()
            )));
        }
        for (j, (lo, hi)) in self.min.iter().zip(&self.max).enumerate() {
            if !lo.is_finite() || !hi.is_finite() || lo > hi {
                return Err(Error::InvalidParameter(format!(
                    "column {j}: min {lo} / max {hi} is not a valid range"
                )));
            }
        }
        Ok(())
    }

    fn scale(&self, j: usize, v: f64) -> f64 {
        if self.is_degenerate(j) {
            0.5
        } else {
            (v - self.min[j]) / (self.max[j] - self.min[j])
        }
    }
}

/// Scales each column to `[0, 1]` with its own min and max.
///
/// Constant columns become 0.5 everywhere; they are reported through
/// [`NormalizationParams::degenerate_columns`].
pub fn minmax_normalize(m: &DataMatrix) -> Result<(DataMatrix, NormalizationParams)> {
    if m.is_empty() {
        return Err(Error::InvalidMatrix("cannot normalize an empty matrix".into()));
    }
    let (min, max): (Vec<f64>, Vec<f64>) = m
        .values
        .columns()
        .into_iter()
        .map(|c| {
            c.iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
        })
        .unzip();
    let params = NormalizationParams { min, max };
    for j in params.degenerate_columns() {
        log::warn!("column {:?} is constant; normalized to 0.5", m.col_labels[j]);
    }
    let values = Array2::from_shape_fn(m.values.dim(), |(i, j)| params.scale(j, m.values[[i, j]]));
    Ok((m.with_values(values)?, params))
}

/// Scales with previously recorded extremes, clamping to `[0, 1]`.
pub fn apply_normalization(m: &DataMatrix, params: &NormalizationParams) -> Result<DataMatrix> {
    params.validate()?;
    if m.ncols() != params.len() {
        return Err(Error::DimensionMismatch(format!(
            "matrix has {} columns, normalization parameters cover {}",
            m.ncols(),
            params.len()
        )));
    }
    let values = Array2::from_shape_fn(m.values.dim(), |(i, j)| {
        params.scale(j, m.values[[i, j]]).clamp(0.0, 1.0)
    });
    m.with_values(values)
}

/// Maps normalized values back to the source scale.
pub fn denormalize(m: &DataMatrix, params: &NormalizationParams) -> Result<DataMatrix> {
    if m.ncols() != params.len() {
        return Err(Error::DimensionMismatch(format!(
            "matrix has {} columns, normalization parameters cover {}",
            m.ncols(),
            params.len()
        )));
    }
    let values = Array2::from_shape_fn(m.values.dim(), |(i, j)| {
        params.min[j] + m.values[[i, j]] * (params.max[j] - params.min[j])
    });
    m.with_values(values)
}
