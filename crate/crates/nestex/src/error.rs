//! Crate-wide error type.
//!
//! Every fallible operation in this crate returns [`Error`]. Variants are
//! grouped by the stage that raises them (I/O and CSV decoding, dataset
//! construction, stratification, estimation, problem definitions, benchmark
//! configuration) so callers — the CLI in particular — can classify a failure
//! as "bad input" versus "runtime/domain failure" by matching on the variant.

use std::path::PathBuf;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Unified error type for all operations in this crate.
#[derive(Debug, thiserror::Error)]
#[non_exhaustive]
pub enum Error {
    /// Underlying I/O failure while reading or writing a file.
    #[error("i/o error on {path}: {source}")]
    Io {
        /// File the operation was touching.
        path: PathBuf,
        /// The originating error.
        #[source]
        source: std::io::Error,
    },

    /// The CSV header does not follow the `x1,..,xJ,y1,..,yK` schema.
    #[error("invalid CSV header: {detail}")]
    Header {
        /// What was wrong with the header line.
        detail: String,
    },

    /// A CSV cell failed to parse as a finite decimal real.
    /// `row` is 1-based counting the header as row 1; `column` is the header
    /// name of the offending column.
    #[error("row {row}, column {column}: cannot parse {value:?} as a finite real")]
    Parse {
        /// 1-based row number (header = row 1).
        row: usize,
        /// Column name from the header.
        column: String,
        /// Offending cell text.
        value: String,
    },

    /// A CSV cell parsed as NaN or ±infinity, which the format forbids.
    #[error("row {row}, column {column}: non-finite value {value:?} is not allowed")]
    NonFinite {
        /// 1-based row number (header = row 1).
        row: usize,
        /// Column name from the header.
        column: String,
        /// Offending cell text.
        value: String,
    },

    /// A CSV body row has the wrong number of cells.
    #[error("row {row}: expected {expected} cells, found {found}")]
    RowWidth {
        /// 1-based row number (header = row 1).
        row: usize,
        /// Cell count implied by the header.
        expected: usize,
        /// Cell count actually present.
        found: usize,
    },

    /// A dataset must contain at least one sample.
    #[error("dataset contains no samples")]
    EmptyDataset,

    /// A sample was constructed with invalid contents (empty or non-finite).
    #[error("invalid sample: {detail}")]
    InvalidSample {
        /// What was wrong.
        detail: String,
    },

    /// Samples within one dataset disagree on the dimensions (J, K).
    #[error(
        "sample {index}: dimensions (J={got_j}, K={got_k}) disagree with \
         the first sample (J={expected_j}, K={expected_k})"
    )]
    InconsistentDimensions {
        /// 0-based index of the offending sample.
        index: usize,
        /// J of the first sample.
        expected_j: usize,
        /// K of the first sample.
        expected_k: usize,
        /// J of the offending sample.
        got_j: usize,
        /// K of the offending sample.
        got_k: usize,
    },

    /// The branching factor `m` must be at least 2.
    #[error("branching factor m must be at least 2, got {m}")]
    InvalidM {
        /// Offending value.
        m: u32,
    },

    /// The sample count is not `m^(2K)`, so the dataset cannot be stratified.
    #[error("dataset of {n} samples with K={k_dim} cannot be stratified with m={m}: N must equal m^(2K) = {required}")]
    NotStratifiable {
        /// Sample count found.
        n: usize,
        /// Requested branching factor.
        m: u32,
        /// Outer dimension of the dataset.
        k_dim: usize,
        /// The required sample count `m^(2K)` (saturating).
        required: u128,
    },

    /// A stratum index was out of range.
    #[error("stratum index {p} out of range: index holds {strata} strata")]
    StratumOutOfRange {
        /// Requested stratum.
        p: usize,
        /// Number of strata available.
        strata: usize,
    },

    /// The outer function cannot be applied to vectors of the dataset's
    /// inner dimension J.
    #[error("outer function {function} cannot be applied with J={j_dim}: {detail}")]
    FunctionArity {
        /// Name of the outer function kind.
        function: &'static str,
        /// Inner dimension of the data.
        j_dim: usize,
        /// What the function requires.
        detail: String,
    },

    /// A linear outer function was given non-finite weights.
    #[error("linear outer function has a non-finite weight at position {index}")]
    InvalidWeights {
        /// 0-based position of the offending weight.
        index: usize,
    },

    /// `log` was applied to a non-positive argument.
    #[error("log applied to non-positive value {value}{}", stratum_suffix(*.stratum))]
    LogDomain {
        /// The offending argument.
        value: f64,
        /// Stratum that produced the argument, when known.
        stratum: Option<usize>,
    },

    /// Regression input rows were empty, inconsistent, or non-finite.
    #[error("invalid regression input: {detail}")]
    RegressionInput {
        /// What was wrong.
        detail: String,
    },

    /// The normal equations stayed singular even after the ridge fallback.
    #[error("regression design is singular beyond the ridge tolerance{}", stratum_suffix(*.stratum))]
    SingularRegression {
        /// Stratum whose fit failed, when known.
        stratum: Option<usize>,
    },

    /// The problem has no conditional sampler, so nested Monte Carlo (and
    /// conditional sampling in general) is unavailable.
    #[error("problem {problem} has no conditional sampler")]
    ConditionalUnavailable {
        /// Tag of the problem.
        problem: &'static str,
    },

    /// An EVSI-only operation was invoked on a non-EVSI problem.
    #[error("problem {problem} is not an EVSI problem")]
    NotEvsi {
        /// Tag of the problem.
        problem: &'static str,
    },

    /// `derive_p_event` was called outside its domain.
    #[error("cannot derive event probability from baseline {p1} and odds ratio {odds_ratio}: \
             baseline must lie strictly in (0,1) and the odds ratio must be positive and finite")]
    PEventDomain {
        /// Baseline probability supplied.
        p1: f64,
        /// Odds ratio supplied.
        odds_ratio: f64,
    },

    /// A problem tag was not recognised.
    #[error("unknown problem {got:?}: expected one of eig-toy, evsi-simple, evsi-medical")]
    UnknownProblem {
        /// The unrecognised tag.
        got: String,
    },

    /// A method tag was not recognised.
    #[error("unknown method {got:?}: expected one of post-strat, post-strat-reg, nmc")]
    UnknownMethod {
        /// The unrecognised tag.
        got: String,
    },

    /// A benchmark configuration failed validation.
    #[error("invalid benchmark configuration: {detail}")]
    InvalidConfig {
        /// What was wrong.
        detail: String,
    },

    /// Too few valid summary points to fit a log-log slope.
    #[error("cannot fit log-log slope for {method}: {have} valid summary points, need at least {need}")]
    InsufficientPoints {
        /// Method whose slope was requested.
        method: &'static str,
        /// Valid points available.
        have: usize,
        /// Points required.
        need: usize,
    },

    /// Benchmark outputs were requested for an empty table.
    #[error("benchmark table is empty; nothing to emit")]
    EmptyTable,
}

fn stratum_suffix(stratum: Option<usize>) -> String {
    match stratum {
        Some(p) => format!(" (stratum {p})"),
        None => String::new(),
    }
}

impl Error {
    /// Attach a stratum index to errors that support one, leaving other
    /// variants untouched. Used by the estimators to report which stratum
    /// produced a domain failure.
    #[must_use]
    pub(crate) fn with_stratum(self, p: usize) -> Self {
        match self {
            Error::LogDomain { value, .. } => Error::LogDomain {
                value,
                stratum: Some(p),
            },
            Error::SingularRegression { .. } => Error::SingularRegression { stratum: Some(p) },
            other => other,
        }
    }
}
