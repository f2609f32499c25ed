//! Benchmark sweeps: replicated estimates over a grid of sample sizes, with
//! MSE summaries, log-log convergence slopes and file outputs.
//!
//! A [`BenchConfig`] names a problem, a set of methods and a grid of
//! branching factors `m`. For every `(method, m, replication)` cell the
//! runner derives an independent seed by hashing
//! `(base_seed, problem, method, m, replication)`, produces one estimate at
//! total cost `N = m^(2K)` (nested Monte Carlo runs at the equal-cost split
//! `N_p = N_q = m^K`), and records the squared error against the problem's
//! reference value.
//!
//! Replications run in parallel on the ambient rayon pool, but every cell's
//! stream is derived independently and results are gathered into the fixed
//! `(method, m, replication)` order, so the output — including the emitted
//! CSV bytes — is identical for every thread count.
//!
//! Domain failures of an estimator (for example `log` of a non-positive
//! prediction at small `N`) are recorded per row and excluded from the
//! summary; a cell with more than 10% failed replications is dropped from
//! the summary (and thus from slopes and plots) entirely.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::dataset::required_samples;
use crate::error::{Error, Result};
use crate::estimators::{
    estimate_nmc, estimate_post_strat, estimate_post_strat_reg, KahanSum, Method,
};
use crate::plot;
use crate::problems::{estimate_evsi, NestedProblem};

/// Fraction of failed replications beyond which a `(method, m)` cell is
/// considered invalid and excluded from the summary.
const MAX_FAILURE_FRACTION: f64 = 0.10;

/// Minimum number of summary points needed to fit a log-log slope.
const MIN_SLOPE_POINTS: usize = 3;

/// Configuration of one benchmark sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    /// Problem to benchmark.
    pub problem: NestedProblem,
    /// Requested methods; `nmc` is dropped automatically when the problem
    /// has no conditional sampler (see [`BenchConfig::effective_methods`]).
    pub methods: Vec<Method>,
    /// Ascending branching factors, each at least 2; cell `m` costs
    /// `m^(2K)` samples.
    pub m_grid: Vec<u32>,
    /// Replications per cell, at least 2.
    pub replications: u32,
    /// Base seed; all cell streams are derived from it by hashing.
    pub base_seed: u64,
    /// Directory the CLI writes `raw.csv`, `summary.csv` and `mse.svg` to.
    /// Not consulted by [`run_benchmark`] itself; pass it (or any other
    /// directory) to [`emit_outputs`].
    pub output_dir: PathBuf,
}

impl BenchConfig {
    /// Checks the structural constraints on the configuration.
    ///
    /// # Errors
    ///
    /// Returns [`Error::InvalidConfig`] for an empty method list, an empty
    /// or non-ascending `m_grid`, entries below 2, or fewer than 2
    /// replications.
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::InvalidConfig {
                detail: "no methods requested".to_string(),
            });
        }
        if self.m_grid.is_empty() {
            return Err(Error::InvalidConfig {
                detail: "m-grid is empty".to_string(),
            });
        }
        if let Some(&m) = self.m_grid.iter().find(|&&m| m < 2) {
            return Err(Error::InvalidConfig {
                detail: format!("m-grid entry {m} is below 2"),
            });
        }
        if self.m_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig {
                detail: "m-grid must be strictly ascending".to_string(),
            });
        }
        if self.replications < 2 {
            return Err(Error::InvalidConfig {
                detail: format!("need at least 2 replications, got {}", self.replications),
            });
        }
        Ok(())
    }

    /// The methods that will actually run: duplicates removed (first
    /// occurrence wins) and `nmc` dropped when the problem lacks a
    /// conditional sampler.
    #[must_use]
    pub fn effective_methods(&self) -> Vec<Method> {
        let mut out = Vec::new();
        for &method in &self.methods {
            if out.contains(&method) {
                continue;
            }
            if method == Method::Nmc && !self.problem.has_conditional() {
                continue;
            }
            out.push(method);
        }
        out
    }
}

/// Why a replication row has no estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowStatus {
    /// The estimator returned a finite value.
    Ok,
    /// The outer function hit a `log`-domain failure.
    LogDomain,
    /// A stratum regression stayed singular beyond the ridge fallback.
    SingularRegression,
}

impl RowStatus {
    /// Stable token used in `raw.csv`.
    #[must_use]
    pub fn as_str(self) -> &'static str {
        match self {
            RowStatus::Ok => "ok",
            RowStatus::LogDomain => "log-domain",
            RowStatus::SingularRegression => "singular-regression",
        }
    }
}

/// One replication of one `(method, m)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct MseRow {
    /// Method that produced the row.
    pub method: Method,
    /// Branching factor of the cell.
    pub m: u32,
    /// Total sample cost `m^(2K)`.
    pub n_total: usize,
    /// Replication index within the cell, starting at 0.
    pub replication: u32,
    /// The estimate, when the replication succeeded.
    pub estimate: Option<f64>,
    /// Squared error against the reference, when the replication succeeded.
    pub squared_error: Option<f64>,
    /// Success or the failure class.
    pub status: RowStatus,
}

/// Aggregate of one valid `(method, m)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct MseSummary {
    /// Method of the cell.
    pub method: Method,
    /// Branching factor of the cell.
    pub m: u32,
    /// Total sample cost `m^(2K)`.
    pub n_total: usize,
    /// Mean of the successful replications' squared errors.
    pub mse: f64,
    /// Standard error of that mean.
    pub stderr: f64,
    /// Number of successful replications.
    pub count: u32,
}

/// Complete result of a benchmark sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct MseTable {
    /// Problem the sweep ran on.
    pub problem: NestedProblem,
    /// Reference value the squared errors were taken against.
    pub reference: f64,
    /// Every replication, in `(method, m, replication)` order.
    pub rows: Vec<MseRow>,
    /// One aggregate per valid cell, in the same order.
    pub summary: Vec<MseSummary>,
}

/// Runs the configured sweep and returns its table.
///
/// # Errors
///
/// Returns [`Error::InvalidConfig`] for structurally invalid configurations
/// or when no usable method remains after the conditional-sampler filter,
/// and propagates non-domain estimator failures (domain failures become
/// failed rows instead).
pub fn run_benchmark(config: &BenchConfig) -> Result<MseTable> {
    config.validate()?;
    let methods = config.effective_methods();
    if methods.is_empty() {
        return Err(Error::InvalidConfig {
            detail: format!(
                "no usable methods remain: {} has no conditional sampler, so nmc cannot run",
                config.problem
            ),
        });
    }
    let reference = config.problem.reference_value();

    let mut jobs = Vec::new();
    for &method in &methods {
        for &m in &config.m_grid {
            for replication in 0..config.replications {
                jobs.push((method, m, replication));
            }
        }
    }

    let rows: Vec<MseRow> = jobs
        .into_par_iter()
        .map(|(method, m, replication)| {
            run_cell_replication(config.problem, method, m, replication, config.base_seed, reference)
        })
        .collect::<Result<Vec<_>>>()?;

    let summary = summarize(&rows, config.replications);
    Ok(MseTable {
        problem: config.problem,
        reference,
        rows,
        summary,
    })
}

fn run_cell_replication(
    problem: NestedProblem,
    method: Method,
    m: u32,
    replication: u32,
    base_seed: u64,
    reference: f64,
) -> Result<MseRow> {
    let seed = derive_seed(
        base_seed,
        &[
            problem_id(problem),
            method_id(method),
            u64::from(m),
            u64::from(replication),
        ],
    );
    let n_total = usize::try_from(required_samples(m, problem.k_dim())).map_err(|_| {
        Error::InvalidConfig {
            detail: format!("cell m = {m} exceeds the addressable sample count"),
        }
    })?;

    let outcome = if problem.is_evsi() {
        estimate_evsi(&problem, method, m, seed)
    } else {
        let f = problem.outer_function();
        match method {
            Method::PostStrat => {
                let d = problem.sample_joint(n_total, seed);
                estimate_post_strat(&d, &f, m).map(|r| r.value)
            }
            Method::PostStratReg => {
                let d = problem.sample_joint(n_total, seed);
                estimate_post_strat_reg(&d, &f, m).map(|r| r.value)
            }
            Method::Nmc => {
                let half = m_pow_k(m, problem.k_dim());
                estimate_nmc(&problem, half, half, seed).map(|r| r.value)
            }
        }
    };

    let row = |estimate, squared_error, status| MseRow {
        method,
        m,
        n_total,
        replication,
        estimate,
        squared_error,
        status,
    };
    match outcome {
        Ok(value) => {
            let err = value - reference;
            Ok(row(Some(value), Some(err * err), RowStatus::Ok))
        }
        Err(Error::LogDomain { .. }) => Ok(row(None, None, RowStatus::LogDomain)),
        Err(Error::SingularRegression { .. }) => {
            Ok(row(None, None, RowStatus::SingularRegression))
        }
        Err(other) => Err(other),
    }
}

fn m_pow_k(m: u32, k_dim: usize) -> usize {
    (m as usize).pow(k_dim as u32)
}

fn problem_id(problem: NestedProblem) -> u64 {
    NestedProblem::ALL
        .iter()
        .position(|&p| p == problem)
        .expect("every problem is listed") as u64
}

fn method_id(method: Method) -> u64 {
    Method::ALL
        .iter()
        .position(|&m| m == method)
        .expect("every method is listed") as u64
}

/// SplitMix64 finalizer: a fixed, build-independent bijective mixer.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent stream seed from the base seed and a tuple of
/// cell coordinates by folding each part through SplitMix64. Deterministic
/// across platforms and thread counts.
pub(crate) fn derive_seed(base_seed: u64, parts: &[u64]) -> u64 {
    let mut h = splitmix64(base_seed);
    for &part in parts {
        h = splitmix64(h ^ part);
    }
    h
}

/// Builds per-cell aggregates from replication rows, excluding failed rows
/// from the mean and dropping cells whose failure fraction exceeds 10%.
/// Rows must be grouped by cell, as `run_benchmark` produces them.
pub(crate) fn summarize(rows: &[MseRow], replications: u32) -> Vec<MseSummary> {
    let mut summary = Vec::new();
    let mut i = 0;
    while i < rows.len() {
        let (method, m) = (rows[i].method, rows[i].m);
        let mut cell = Vec::new();
        let mut failures = 0u32;
        let mut n_total = rows[i].n_total;
        while i < rows.len() && rows[i].method == method && rows[i].m == m {
            n_total = rows[i].n_total;
            match rows[i].squared_error {
                Some(sq) => cell.push(sq),
                None => failures += 1,
            }
            i += 1;
        }
        let failure_fraction = f64::from(failures) / f64::from(replications);
        if failure_fraction > MAX_FAILURE_FRACTION || cell.is_empty() {
            continue;
        }
        let count = cell.len() as u32;
        let mut acc = KahanSum::new();
        for &sq in &cell {
            acc.add(sq);
        }
        let mse = acc.value() / f64::from(count);
        let stderr = if count > 1 {
            let mut var_acc = KahanSum::new();
            for &sq in &cell {
                var_acc.add((sq - mse) * (sq - mse));
            }
            (var_acc.value() / f64::from(count - 1) / f64::from(count)).sqrt()
        } else {
            0.0
        };
        summary.push(MseSummary {
            method,
            m,
            n_total,
            mse,
            stderr,
            count,
        });
    }
    summary
}

/// Ordinary-least-squares slope of `ln(mse)` against `ln(N)` over the valid
/// summary points of one method.
///
/// # Errors
///
/// Returns [`Error::InsufficientPoints`] with fewer than three valid points.
pub fn fit_loglog_slope(table: &MseTable, method: Method) -> Result<f64> {
    let points: Vec<(f64, f64)> = table
        .summary
        .iter()
        .filter(|s| s.method == method && s.mse > 0.0)
        .map(|s| ((s.n_total as f64).ln(), s.mse.ln()))
        .collect();
    if points.len() < MIN_SLOPE_POINTS {
        return Err(Error::InsufficientPoints {
            method: method.tag(),
            have: points.len(),
            need: MIN_SLOPE_POINTS,
        });
    }
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points
        .iter()
        .map(|p| (p.0 - mean_x) * (p.1 - mean_y))
        .sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    Ok(sxy / sxx)
}

/// Writes `raw.csv`, `summary.csv` and `mse.svg` into `dir`, creating it if
/// needed. Output bytes are a pure function of the table: re-emitting the
/// same table produces identical files.
///
/// # Errors
///
/// Returns [`Error::EmptyTable`] for a table without rows and [`Error::Io`]
/// on filesystem failures.
pub fn emit_outputs(table: &MseTable, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    if table.rows.is_empty() {
        return Err(Error::EmptyTable);
    }
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;

    let write = |name: &str, content: String| -> Result<()> {
        let path = dir.join(name);
        fs::write(&path, content).map_err(|source| Error::Io { path, source })
    };
    write("raw.csv", render_raw_csv(table))?;
    write("summary.csv", render_summary_csv(table))?;
    write("mse.svg", plot::render_mse_chart(table))
}

fn render_raw_csv(table: &MseTable) -> String {
    let mut out = String::from("method,m,n_total,replication,estimate,squared_error,status\n");
    for row in &table.rows {
        let _ = write!(out, "{},{},{},{},", row.method, row.m, row.n_total, row.replication);
        if let Some(estimate) = row.estimate {
            let _ = write!(out, "{estimate}");
        }
        out.push(',');
        if let Some(sq) = row.squared_error {
            let _ = write!(out, "{sq}");
        }
        let _ = writeln!(out, ",{}", row.status.as_str());
    }
    out
}

fn render_summary_csv(table: &MseTable) -> String {
    let mut out = String::from("method,n_total,mse,stderr,count\n");
    for s in &table.summary {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            s.method, s.n_total, s.mse, s.stderr, s.count
        );
    }
    out
}
