//! Estimators of nested expectations `E_Y[ f( E_{X|Y}[X] ) ]`.
//!
//! Four estimators are provided:
//!
//! * [`estimate_post_strat`] — stratifies a joint dataset of `N = m^(2K)`
//!   samples into `sqrt(N)` strata (see [`crate::stratify`]), replaces each
//!   stratum's inner expectation by its element-wise sample mean, applies the
//!   outer function `f` per stratum and averages the results;
//! * [`estimate_post_strat_reg`] — like the above, but within each stratum
//!   fits a per-coordinate linear model of `X` on `Y` by least squares and
//!   applies `f` to the per-sample predictions, averaging over all `N`
//!   samples; this smooths the inner means with the local trend of `X` in
//!   `Y`;
//! * [`estimate_nmc`] — classical nested Monte Carlo with `N_p` outer draws
//!   and `N_q` fresh conditional draws each, for problems that expose a
//!   conditional sampler;
//! * [`estimate_plain_mc`] — `f` applied to the grand mean, the collapsed
//!   baseline any `f`-linear case must agree with.
//!
//! # Numerical policy
//!
//! All inner and outer means use Kahan–Babuška compensated summation in a
//! fixed index order. Strata are processed sequentially; parallelism in this
//! crate lives at the benchmark's replication level, so every estimate is a
//! bitwise-deterministic function of its inputs regardless of thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::problems::NestedProblem;
use crate::stratify::{stratify, StratifiedIndex};

/// Relative pivot tolerance of the least-squares solver: a Cholesky pivot
/// below this fraction of the largest `MᵀM` diagonal entry counts as zero.
const PIVOT_REL_TOL: f64 = 1e-10;

/// Ridge scale of the fallback solve: `λ = RIDGE_SCALE · trace(MᵀM)/(K+1)`.
const RIDGE_SCALE: f64 = 1e-8;

// ---------------------------------------------------------------------------
// Method and outer-function tags
// ---------------------------------------------------------------------------

/// Estimation method selector used by the EVSI driver, the benchmark runner
/// and the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// Post-stratified estimator on a joint dataset.
    PostStrat,
    /// Post-stratified estimator with per-stratum linear regression.
    PostStratReg,
    /// Nested Monte Carlo with fresh conditional draws.
    Nmc,
}

impl Method {
    /// All methods, in canonical presentation order.
    pub const ALL: [Method; 3] = [Method::PostStrat, Method::PostStratReg, Method::Nmc];

    /// Canonical kebab-case tag, as used in CLI flags and CSV output.
    #[must_use]
    pub fn tag(self) -> &'static str {
        match self {
            Method::PostStrat => "post-strat",
            Method::PostStratReg => "post-strat-reg",
            Method::Nmc => "nmc",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "post-strat" | "post_strat" => Ok(Method::PostStrat),
            "post-strat-reg" | "post_strat_reg" => Ok(Method::PostStratReg),
            "nmc" => Ok(Method::Nmc),
            other => Err(Error::UnknownMethod {
                got: other.to_string(),
            }),
        }
    }
}

/// The outer function `f` applied to (estimated) inner expectations.
#[derive(Debug, Clone, PartialEq)]
pub enum OuterFunction {
    /// Natural logarithm of the single coordinate; requires `J = 1` and a
    /// strictly positive argument.
    Log,
    /// Maximum over the `J` coordinates.
    MaxCoordinate,
    /// The single coordinate itself; requires `J = 1`.
    Identity,
    /// Weighted sum `w · x`; the weight vector must have length `J` and be
    /// finite.
    Linear(Vec<f64>),
}

impl OuterFunction {
    /// Short name used in error messages.
    #[must_use]
    pub fn name(&self) -> &'static str {
        match self {
            OuterFunction::Log => "log",
            OuterFunction::MaxCoordinate => "max-coordinate",
            OuterFunction::Identity => "identity",
            OuterFunction::Linear(_) => "linear",
        }
    }

    /// Checks that `self` can be applied to vectors of length `j_dim`.
    ///
    /// # Errors
    ///
    /// Returns [`Error::FunctionArity`] on a dimension mismatch and
    /// [`Error::InvalidWeights`] if a linear weight is non-finite.
    pub fn check_arity(&self, j_dim: usize) -> Result<()> {
        match self {
            OuterFunction::Log | OuterFunction::Identity => {
                if j_dim != 1 {
                    return Err(Error::FunctionArity {
                        function: self.name(),
                        j_dim,
                        detail: "requires J = 1".to_string(),
                    });
                }
            }
            OuterFunction::MaxCoordinate => {
                if j_dim == 0 {
                    return Err(Error::FunctionArity {
                        function: self.name(),
                        j_dim,
                        detail: "requires J >= 1".to_string(),
                    });
                }
            }
            OuterFunction::Linear(w) => {
                if w.len() != j_dim {
                    return Err(Error::FunctionArity {
                        function: self.name(),
                        j_dim,
                        detail: format!("weight vector has length {}", w.len()),
                    });
                }
                if let Some(index) = w.iter().position(|v| !v.is_finite()) {
                    return Err(Error::InvalidWeights { index });
                }
            }
        }
        Ok(())
    }

    /// Applies the function to one vector.
    ///
    /// # Errors
    ///
    /// Returns the arity errors of [`OuterFunction::check_arity`] and
    /// [`Error::LogDomain`] when `Log` meets a non-positive argument.
    pub fn apply(&self, x: &[f64]) -> Result<f64> {
        self.check_arity(x.len())?;
        match self {
            OuterFunction::Log => {
                let v = x[0];
                if v <= 0.0 {
                    return Err(Error::LogDomain {
                        value: v,
                        stratum: None,
                    });
                }
                Ok(v.ln())
            }
            OuterFunction::MaxCoordinate => {
                Ok(x.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            }
            OuterFunction::Identity => Ok(x[0]),
            OuterFunction::Linear(w) => {
                let mut acc = KahanSum::new();
                for (wi, xi) in w.iter().zip(x) {
                    acc.add(wi * xi);
                }
                Ok(acc.value())
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Results
// ---------------------------------------------------------------------------

/// The outcome of one estimator invocation, with its cost bookkeeping.
///
/// Invariants: `n_outer * n_inner == n_total` for nested Monte Carlo and
/// `n_outer == n_inner == sqrt(n_total)` for the stratified methods (where
/// `m` is also present).
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateResult {
    /// The estimate itself; always finite.
    pub value: f64,
    /// Which estimator produced the value.
    pub method: Method,
    /// Total number of samples consumed.
    pub n_total: usize,
    /// Branching factor for the stratified methods, absent for NMC.
    pub m: Option<u32>,
    /// Outer sample count (`sqrt(N)` strata, or `N_p` for NMC).
    pub n_outer: usize,
    /// Inner sample count (`sqrt(N)` per stratum, or `N_q` for NMC).
    pub n_inner: usize,
}

/// One per-stratum, per-coordinate linear fit of `X_j` on `Y`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionFit {
    /// Coefficients `(c_0, c_1, .., c_K)`: intercept first, then one slope
    /// per outer coordinate.
    pub coeffs: Vec<f64>,
    /// Whether the ridge fallback was needed to solve the normal equations.
    pub ridge_used: bool,
}

impl RegressionFit {
    /// Evaluates the fitted model at an outer point:
    /// `c_0 + c_1 y_1 + .. + c_K y_K`.
    ///
    /// # Panics
    ///
    /// Panics if `y.len() + 1 != self.coeffs.len()`.
    #[must_use]
    pub fn predict(&self, y: &[f64]) -> f64 {
        assert_eq!(
            y.len() + 1,
            self.coeffs.len(),
            "predicting with {} coordinates against {} coefficients",
            y.len(),
            self.coeffs.len()
        );
        let mut acc = self.coeffs[0];
        for (c, v) in self.coeffs[1..].iter().zip(y) {
            acc += c * v;
        }
        acc
    }
}

// ---------------------------------------------------------------------------
// Compensated summation
// ---------------------------------------------------------------------------

/// Kahan–Babuška (Neumaier) compensated accumulator. Addition order is the
/// caller's loop order, which this crate keeps fixed, so sums are bitwise
/// reproducible.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct KahanSum {
    sum: f64,
    compensation: f64,
}

impl KahanSum {
    pub(crate) fn new() -> Self {
        Self::default()
    }

    pub(crate) fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Element-wise mean of the `X` components of stratum `p`, written into
/// `out` (length `J`), using compensated summation in stratum order.
fn stratum_mean_into(dataset: &Dataset, index: &StratifiedIndex, p: usize, out: &mut [f64]) {
    let indices = index
        .stratum_indices(p)
        .expect("stratum index within range by construction");
    for (j, slot) in out.iter_mut().enumerate() {
        let mut acc = KahanSum::new();
        for &i in indices {
            acc.add(dataset.sample(i).x()[j]);
        }
        *slot = acc.value() / indices.len() as f64;
    }
}

// ---------------------------------------------------------------------------
// Post-stratified estimators
// ---------------------------------------------------------------------------

/// Post-stratified estimator: stratifies the dataset, applies `f` to each
/// stratum's element-wise inner mean and averages over the `sqrt(N)` strata.
///
/// # Errors
///
/// Propagates stratification errors ([`Error::InvalidM`],
/// [`Error::NotStratifiable`]), arity errors of `f`, and [`Error::LogDomain`]
/// (annotated with the offending stratum) when `Log` meets a non-positive
/// inner mean.
pub fn estimate_post_strat(
    dataset: &Dataset,
    f: &OuterFunction,
    m: u32,
) -> Result<EstimateResult> {
    f.check_arity(dataset.j_dim())?;
    let index = stratify(dataset, m)?;
    let root_n = index.stratum_size();

    let mut mean = vec![0.0; dataset.j_dim()];
    let mut outer = KahanSum::new();
    for p in 0..index.strata() {
        stratum_mean_into(dataset, &index, p, &mut mean);
        let fv = f.apply(&mean).map_err(|e| e.with_stratum(p))?;
        outer.add(fv);
    }
    Ok(EstimateResult {
        value: outer.value() / root_n as f64,
        method: Method::PostStrat,
        n_total: index.n_total(),
        m: Some(m),
        n_outer: root_n,
        n_inner: root_n,
    })
}

/// Regression variant of the post-stratified estimator: within each stratum,
/// fits `X_j ~ c_0 + c · Y` per coordinate by least squares, replaces every
/// sample's `X` by its fitted prediction, applies `f` per sample and
/// averages over all `N` samples.
///
/// # Errors
///
/// As [`estimate_post_strat`], plus [`Error::SingularRegression`] when a
/// stratum's normal equations stay singular beyond the ridge fallback.
/// `Log`-domain and singularity errors name the offending stratum.
pub fn estimate_post_strat_reg(
    dataset: &Dataset,
    f: &OuterFunction,
    m: u32,
) -> Result<EstimateResult> {
    f.check_arity(dataset.j_dim())?;
    let index = stratify(dataset, m)?;
    let root_n = index.stratum_size();
    let j_dim = dataset.j_dim();

    let mut fits: Vec<RegressionFit> = Vec::with_capacity(j_dim);
    let mut pred = vec![0.0; j_dim];
    let mut total = KahanSum::new();
    for p in 0..index.strata() {
        let indices = index
            .stratum_indices(p)
            .expect("stratum index within range by construction");

        fits.clear();
        for j in 0..j_dim {
            let rows: Vec<(&[f64], f64)> = indices
                .iter()
                .map(|&i| {
                    let s = dataset.sample(i);
                    (s.y(), s.x()[j])
                })
                .collect();
            fits.push(fit_stratum_regression(&rows).map_err(|e| e.with_stratum(p))?);
        }

        for &i in indices {
            let y = dataset.sample(i).y();
            for (j, fit) in fits.iter().enumerate() {
                pred[j] = fit.predict(y);
            }
            let fv = f.apply(&pred).map_err(|e| e.with_stratum(p))?;
            total.add(fv);
        }
    }
    Ok(EstimateResult {
        value: total.value() / index.n_total() as f64,
        method: Method::PostStratReg,
        n_total: index.n_total(),
        m: Some(m),
        n_outer: root_n,
        n_inner: root_n,
    })
}

/// Fits one within-stratum linear model `x ~ c_0 + c · y` by least squares
/// on the normal equations `MᵀM c = Mᵀv`, where the rows of `M` are
/// `(1, y_1, .., y_K)`.
///
/// The normal equations are solved by a symmetric positive-semidefinite
/// Cholesky factorisation with a relative pivot tolerance of `1e-10` of the
/// largest diagonal entry. If the tolerance trips (rank-deficient designs,
/// e.g. all rows sharing one `y`), the solve is retried once with the ridge
/// term `λI`, `λ = 1e-8 · trace(MᵀM)/(K+1)`, and `ridge_used` is set.
///
/// # Errors
///
/// * [`Error::RegressionInput`] for empty input, inconsistent row lengths or
///   non-finite values,
/// * [`Error::SingularRegression`] when the ridge retry also fails.
pub fn fit_stratum_regression(rows: &[(&[f64], f64)]) -> Result<RegressionFit> {
    let Some(first) = rows.first() else {
        return Err(Error::RegressionInput {
            detail: "no rows".to_string(),
        });
    };
    let k_dim = first.0.len();
    if k_dim == 0 {
        return Err(Error::RegressionInput {
            detail: "outer vectors are empty".to_string(),
        });
    }
    for (i, (y, x)) in rows.iter().enumerate() {
        if y.len() != k_dim {
            return Err(Error::RegressionInput {
                detail: format!("row {i} has {} outer coordinates, expected {k_dim}", y.len()),
            });
        }
        if !x.is_finite() || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::RegressionInput {
                detail: format!("row {i} contains a non-finite value"),
            });
        }
    }

    let dim = k_dim + 1;
    // A = MᵀM and b = Mᵀv accumulated directly; rows of M are (1, y).
    let mut a = vec![0.0; dim * dim];
    let mut b = vec![0.0; dim];
    for (y, x) in rows {
        let row = |t: usize| if t == 0 { 1.0 } else { y[t - 1] };
        for r in 0..dim {
            for c in 0..=r {
                a[r * dim + c] += row(r) * row(c);
            }
            b[r] += row(r) * x;
        }
    }
    // Mirror the lower triangle.
    for r in 0..dim {
        for c in (r + 1)..dim {
            a[r * dim + c] = a[c * dim + r];
        }
    }

    if let Some(coeffs) = solve_spd(&a, &b, dim) {
        return Ok(RegressionFit {
            coeffs,
            ridge_used: false,
        });
    }

    let trace: f64 = (0..dim).map(|i| a[i * dim + i]).sum();
    if trace == 0.0 {
        // Unreachable through the public estimators (the intercept column
        // forces trace >= number of rows), but the degenerate all-zero
        // system with a zero response has the well-defined answer 0.
        if b.iter().all(|&v| v == 0.0) {
            return Ok(RegressionFit {
                coeffs: vec![0.0; dim],
                ridge_used: false,
            });
        }
        return Err(Error::SingularRegression { stratum: None });
    }
    let lambda = RIDGE_SCALE * trace / dim as f64;
    let mut ridged = a.clone();
    for i in 0..dim {
        ridged[i * dim + i] += lambda;
    }
    match solve_spd(&ridged, &b, dim) {
        Some(coeffs) => Ok(RegressionFit {
            coeffs,
            ridge_used: true,
        }),
        None => Err(Error::SingularRegression { stratum: None }),
    }
}

/// Cholesky solve of the symmetric positive-semidefinite system `a x = b`
/// (`a` is `dim × dim`, row-major). Returns `None` when a pivot falls below
/// the relative tolerance or the solution is non-finite.
fn solve_spd(a: &[f64], b: &[f64], dim: usize) -> Option<Vec<f64>> {
    let max_diag = (0..dim).map(|i| a[i * dim + i]).fold(0.0f64, f64::max);
    let threshold = PIVOT_REL_TOL * max_diag;

    let mut l = vec![0.0; dim * dim];
    for i in 0..dim {
        for j in 0..=i {
            let mut s = a[i * dim + j];
            for t in 0..j {
                s -= l[i * dim + t] * l[j * dim + t];
            }
            if i == j {
                if s <= threshold {
                    return None;
                }
                l[i * dim + i] = s.sqrt();
            } else {
                l[i * dim + j] = s / l[j * dim + j];
            }
        }
    }

    // Forward substitution: L z = b.
    let mut z = vec![0.0; dim];
    for i in 0..dim {
        let mut s = b[i];
        for t in 0..i {
            s -= l[i * dim + t] * z[t];
        }
        z[i] = s / l[i * dim + i];
    }
    // Back substitution: Lᵀ x = z.
    let mut x = vec![0.0; dim];
    for i in (0..dim).rev() {
        let mut s = z[i];
        for t in (i + 1)..dim {
            s -= l[t * dim + i] * x[t];
        }
        x[i] = s / l[i * dim + i];
    }
    if x.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some(x)
}

// ---------------------------------------------------------------------------
// Nested and plain Monte Carlo
// ---------------------------------------------------------------------------

/// Outcome of one nested Monte Carlo run, including the grand mean of all
/// inner draws (used by the EVSI driver as its baseline term at no extra
/// sampling cost).
pub(crate) struct NmcRun {
    pub(crate) value: f64,
    pub(crate) x_grand_mean: Vec<f64>,
}

pub(crate) fn run_nmc(
    problem: &NestedProblem,
    n_outer: usize,
    n_inner: usize,
    seed: u64,
) -> Result<NmcRun> {
    assert!(
        n_outer >= 1 && n_inner >= 1,
        "nested Monte Carlo needs at least one outer and one inner sample"
    );
    if !problem.has_conditional() {
        return Err(Error::ConditionalUnavailable {
            problem: problem.tag(),
        });
    }
    let f = problem.outer_function();
    let j_dim = problem.j_dim();
    f.check_arity(j_dim)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let outer_samples = problem.sample_joint_with(&mut rng, n_outer);

    let mut outer = KahanSum::new();
    let mut grand: Vec<KahanSum> = vec![KahanSum::new(); j_dim];
    let mut mean = vec![0.0; j_dim];
    for p in 0..n_outer {
        let y = outer_samples.sample(p).y();
        let draws = problem.sample_conditional_with(&mut rng, y, n_inner)?;
        for (j, slot) in mean.iter_mut().enumerate() {
            let mut acc = KahanSum::new();
            for draw in &draws {
                acc.add(draw[j]);
            }
            *slot = acc.value() / n_inner as f64;
        }
        for draw in &draws {
            for (j, g) in grand.iter_mut().enumerate() {
                g.add(draw[j]);
            }
        }
        outer.add(f.apply(&mean)?);
    }
    let total = (n_outer * n_inner) as f64;
    Ok(NmcRun {
        value: outer.value() / n_outer as f64,
        x_grand_mean: grand.iter().map(|g| g.value() / total).collect(),
    })
}

/// Nested Monte Carlo estimator: `N_p` outer draws of `Y`, each with `N_q`
/// fresh draws from the conditional law of `X` given `Y`, the outer function
/// applied to each inner mean.
///
/// # Errors
///
/// Returns [`Error::ConditionalUnavailable`] for problems without a
/// conditional sampler and propagates `f`'s domain errors.
///
/// # Panics
///
/// Panics if `n_outer` or `n_inner` is zero.
pub fn estimate_nmc(
    problem: &NestedProblem,
    n_outer: usize,
    n_inner: usize,
    seed: u64,
) -> Result<EstimateResult> {
    let run = run_nmc(problem, n_outer, n_inner, seed)?;
    Ok(EstimateResult {
        value: run.value,
        method: Method::Nmc,
        n_total: n_outer * n_inner,
        m: None,
        n_outer,
        n_inner,
    })
}

/// Plain Monte Carlo collapse: `f` applied to the element-wise grand mean of
/// `X` over the whole dataset. For linear `f` this is what any valid nested
/// estimator must reproduce up to accumulation error.
///
/// # Errors
///
/// Propagates arity and domain errors of `f`.
pub fn estimate_plain_mc(dataset: &Dataset, f: &OuterFunction) -> Result<f64> {
    f.check_arity(dataset.j_dim())?;
    let mut mean = vec![0.0; dataset.j_dim()];
    for (j, slot) in mean.iter_mut().enumerate() {
        let mut acc = KahanSum::new();
        for sample in dataset.samples() {
            acc.add(sample.x()[j]);
        }
        *slot = acc.value() / dataset.n() as f64;
    }
    f.apply(&mean)
}
