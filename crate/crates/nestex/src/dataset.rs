//! Joint-sample containers and their CSV exchange format.
//!
//! A [`JointSample`] is one draw `(X, Y)` from a joint distribution, with the
//! inner variable `X` in `R^J` and the outer variable `Y` in `R^K`. A
//! [`Dataset`] is a non-empty, dimension-consistent collection of such draws.
//! Validation is total: every constructor checks its input, so no partially
//! constructed value ever escapes, and downstream code (stratification,
//! estimation) can rely on finiteness and consistent dimensions without
//! re-checking.
//!
//! # File format
//!
//! Datasets round-trip through a strict CSV dialect:
//!
//! * header `x1,..,xJ,y1,..,yK` (x-block first, then y-block, both 1-based),
//! * one body row per sample, cells are finite decimal reals,
//! * UTF-8, LF line endings, optional trailing newline, no quoting,
//! * floats are written in shortest round-trip form, so
//!   `read_csv(write_csv(d)) == d` bit for bit.
//!
//! NaN and ±infinity are rejected on read; errors name the 1-based row
//! (counting the header as row 1) and the column.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// One joint draw `(X, Y)` with `X` in `R^J` and `Y` in `R^K`.
///
/// Both components are non-empty and contain only finite values; this is
/// enforced at construction and preserved thereafter (the fields are
/// private).
#[derive(Debug, Clone, PartialEq)]
pub struct JointSample {
    x: Vec<f64>,
    y: Vec<f64>,
}

impl JointSample {
    /// Creates a sample from its inner (`x`) and outer (`y`) components.
    ///
    /// # Errors
    ///
    /// Returns [`Error::InvalidSample`] if either component is empty or
    /// contains a non-finite value.
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::InvalidSample {
                detail: "inner component x is empty".to_string(),
            });
        }
        if y.is_empty() {
            return Err(Error::InvalidSample {
                detail: "outer component y is empty".to_string(),
            });
        }
        for (label, values) in [("x", &x), ("y", &y)] {
            if let Some(i) = values.iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidSample {
                    detail: format!("{label}[{i}] = {} is not finite", values[i]),
                });
            }
        }
        Ok(Self { x, y })
    }

    /// Inner component `X` (length J).
    #[must_use]
    pub fn x(&self) -> &[f64] {
        &self.x
    }

    /// Outer component `Y` (length K).
    #[must_use]
    pub fn y(&self) -> &[f64] {
        &self.y
    }
}

/// A non-empty collection of [`JointSample`]s sharing one pair of
/// dimensions `(J, K)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<JointSample>,
    j_dim: usize,
    k_dim: usize,
}

impl Dataset {
    /// Builds a dataset from samples, inferring `(J, K)` from the first one.
    ///
    /// # Errors
    ///
    /// Returns [`Error::EmptyDataset`] for an empty vector and
    /// [`Error::InconsistentDimensions`] if any sample disagrees with the
    /// first on `J` or `K`.
    pub fn new(samples: Vec<JointSample>) -> Result<Self> {
        let first = samples.first().ok_or(Error::EmptyDataset)?;
        let (j_dim, k_dim) = (first.x.len(), first.y.len());
        for (index, sample) in samples.iter().enumerate().skip(1) {
            if sample.x.len() != j_dim || sample.y.len() != k_dim {
                return Err(Error::InconsistentDimensions {
                    index,
                    expected_j: j_dim,
                    expected_k: k_dim,
                    got_j: sample.x.len(),
                    got_k: sample.y.len(),
                });
            }
        }
        Ok(Self {
            samples,
            j_dim,
            k_dim,
        })
    }

    /// Number of samples `N`.
    #[must_use]
    pub fn n(&self) -> usize {
        self.samples.len()
    }

    /// Inner dimension `J`.
    #[must_use]
    pub fn j_dim(&self) -> usize {
        self.j_dim
    }

    /// Outer dimension `K`.
    #[must_use]
    pub fn k_dim(&self) -> usize {
        self.k_dim
    }

    /// All samples in insertion order.
    #[must_use]
    pub fn samples(&self) -> &[JointSample] {
        &self.samples
    }

    /// The `i`-th sample.
    ///
    /// # Panics
    ///
    /// Panics if `i >= self.n()`.
    #[must_use]
    pub fn sample(&self, i: usize) -> &JointSample {
        &self.samples[i]
    }
}

/// The sample count `m^(2K)` required for stratification, saturating at
/// `u128::MAX` for absurd inputs (which then simply never equal any real N).
pub(crate) fn required_samples(m: u32, k_dim: usize) -> u128 {
    let exponent = (2 * k_dim) as u32;
    u128::from(m).saturating_pow(exponent)
}

/// Checks that `dataset` can be stratified with branching factor `m`,
/// i.e. that `m >= 2` and `N == m^(2K)`.
///
/// # Errors
///
/// Returns [`Error::InvalidM`] for `m < 2` and [`Error::NotStratifiable`]
/// when the sample count is wrong.
pub fn check_stratifiable(dataset: &Dataset, m: u32) -> Result<()> {
    if m < 2 {
        return Err(Error::InvalidM { m });
    }
    let required = required_samples(m, dataset.k_dim());
    if dataset.n() as u128 != required {
        return Err(Error::NotStratifiable {
            n: dataset.n(),
            m,
            k_dim: dataset.k_dim(),
            required,
        });
    }
    Ok(())
}

/// Reads a dataset from the CSV format described in the module docs.
///
/// # Errors
///
/// * [`Error::Io`] if the file cannot be read,
/// * [`Error::Header`] for a malformed or misordered header,
/// * [`Error::RowWidth`], [`Error::Parse`], [`Error::NonFinite`] for body
///   defects (all naming the 1-based row and the column),
/// * [`Error::EmptyDataset`] when the body has no rows.
pub fn read_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_csv(&content)
}

fn parse_csv(content: &str) -> Result<Dataset> {
    if content.contains('\r') {
        return Err(Error::Header {
            detail: "carriage return found; only LF line endings are supported".to_string(),
        });
    }
    let mut lines = content.split('\n');
    let header_line = lines.next().unwrap_or("");
    let (names, j_dim, k_dim) = parse_header(header_line)?;

    let mut samples = Vec::new();
    for (offset, line) in lines.enumerate() {
        let row = offset + 2; // 1-based, header is row 1
        if line.is_empty() {
            // Either the optional trailing newline or a genuinely blank line;
            // only the former is allowed.
            if lines_remaining_blank(content, row) {
                break;
            }
            return Err(Error::RowWidth {
                row,
                expected: names.len(),
                found: 0,
            });
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != names.len() {
            return Err(Error::RowWidth {
                row,
                expected: names.len(),
                found: cells.len(),
            });
        }
        let mut values = Vec::with_capacity(cells.len());
        for (cell, name) in cells.iter().zip(&names) {
            let value: f64 = cell.parse().map_err(|_| Error::Parse {
                row,
                column: name.clone(),
                value: (*cell).to_string(),
            })?;
            if !value.is_finite() {
                return Err(Error::NonFinite {
                    row,
                    column: name.clone(),
                    value: (*cell).to_string(),
                });
            }
            values.push(value);
        }
        let y = values.split_off(j_dim);
        debug_assert_eq!(values.len(), j_dim);
        debug_assert_eq!(y.len(), k_dim);
        samples.push(JointSample { x: values, y });
    }
    Dataset::new(samples)
}

/// True when everything from 1-based line `row` onwards is empty, i.e. the
/// current empty line is just the trailing newline.
fn lines_remaining_blank(content: &str, row: usize) -> bool {
    content.split('\n').skip(row - 1).all(str::is_empty)
}

fn parse_header(line: &str) -> Result<(Vec<String>, usize, usize)> {
    if line.is_empty() {
        return Err(Error::Header {
            detail: "file is empty; expected a header of the form x1,..,xJ,y1,..,yK".to_string(),
        });
    }
    let names: Vec<String> = line.split(',').map(str::to_string).collect();
    let mut j_dim = 0;
    while j_dim < names.len() && names[j_dim] == format!("x{}", j_dim + 1) {
        j_dim += 1;
    }
    if j_dim == 0 {
        return Err(Error::Header {
            detail: format!("expected first column \"x1\", found {:?}", names[0]),
        });
    }
    let mut k_dim = 0;
    while j_dim + k_dim < names.len() && names[j_dim + k_dim] == format!("y{}", k_dim + 1) {
        k_dim += 1;
    }
    if k_dim == 0 {
        return Err(Error::Header {
            detail: format!(
                "expected column {} to be \"y1\", found {:?}",
                j_dim + 1,
                names[j_dim]
            ),
        });
    }
    let used = j_dim + k_dim;
    if used != names.len() {
        return Err(Error::Header {
            detail: format!(
                "unexpected column {:?} at position {}: header must be x1,..,x{j_dim},y1,..,y{k_dim}",
                names[used],
                used + 1,
            ),
        });
    }
    Ok((names, j_dim, k_dim))
}

/// Writes a dataset to `path` in the CSV format described in the module
/// docs. Floats are rendered in shortest round-trip form so a subsequent
/// [`read_csv`] reproduces the dataset exactly.
///
/// # Errors
///
/// Returns [`Error::Io`] if the file cannot be written.
pub fn write_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, render_csv(dataset)).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn render_csv(dataset: &Dataset) -> String {
    let mut out = String::new();
    for j in 0..dataset.j_dim() {
        if j > 0 {
            out.push(',');
        }
        let _ = write!(out, "x{}", j + 1);
    }
    for k in 0..dataset.k_dim() {
        let _ = write!(out, ",y{}", k + 1);
    }
    out.push('\n');
    for sample in dataset.samples() {
        let mut first = true;
        for value in sample.x().iter().chain(sample.y()) {
            if !first {
                out.push(',');
            }
            first = false;
            // `{}` on f64 is the shortest representation that parses back to
            // the same bits, which is exactly the round-trip guarantee the
            // format makes.
            let _ = write!(out, "{value}");
        }
        out.push('\n');
    }
    out
}
