//! Nested-expectation estimation by post-stratification of joint samples.
//!
//! The quantity of interest is `I = E_Y[ f( E[X | Y] ) ]`: an outer
//! function `f` applied to a conditional expectation, then averaged over
//! the conditioning variable. The classical nested Monte Carlo estimator
//! needs a conditional sampler for `X | Y` and spends `N_p × N_q` model
//! evaluations. The estimators in this crate need only *joint* draws of
//! `(X, Y)`: they sort `N = m^(2K)` joint samples into `√N` strata of
//! near-constant `Y` by `K` passes of nested stable sorting, then either
//!
//! * average `X` within each stratum and apply `f` to the stratum means
//!   ([`estimate_post_strat`]), or
//! * fit a linear response `X ~ (1, Y)` within each stratum and apply `f`
//!   to the per-sample predictions ([`estimate_post_strat_reg`]).
//!
//! Both reuse every sample in both the conditioning and the averaging role,
//! which restores the fast MSE decay of nested estimation without ever
//! sampling from a conditional law — the property that makes problems like
//! [`problems::NestedProblem::EvsiMedical`] tractable, where `X | Y` has no
//! closed form.
//!
//! # Crate layout
//!
//! * [`dataset`] — joint samples, validation, and a strict CSV interchange
//!   format.
//! * [`stratify`] — the nested stable sort producing contiguous strata.
//! * [`estimators`] — the two post-stratified estimators, the nested Monte
//!   Carlo baseline, and the outer functions.
//! * [`problems`] — three built-in benchmark problems with known reference
//!   values, including a nine-parameter medical decision model and its
//!   expected-value-of-sample-information (EVSI) driver.
//! * [`bench`] — replicated MSE sweeps, convergence slopes, CSV/SVG output.
//!
//! # Example
//!
//! ```
//! use nestex::{estimate_post_strat, NestedProblem};
//!
//! let problem = NestedProblem::EigToy;
//! let data = problem.sample_joint(16 * 16, 7); // N = m^(2K) with m = 16, K = 1
//! let fit = estimate_post_strat(&data, &problem.outer_function(), 16)?;
//! let err = (fit.value - problem.reference_value()).abs();
//! assert!(err < 0.2, "estimate {} too far off", fit.value);
//! # Ok::<(), nestex::Error>(())
//! ```

pub mod bench;
pub mod dataset;
mod error;
pub mod estimators;
mod plot;
pub mod problems;
pub mod stratify;

pub use bench::{run_benchmark, BenchConfig, MseRow, MseSummary, MseTable, RowStatus};
pub use bench::{emit_outputs, fit_loglog_slope};
pub use dataset::{check_stratifiable, read_csv, write_csv, Dataset, JointSample};
pub use error::{Error, Result};
pub use estimators::{
    estimate_nmc, estimate_plain_mc, estimate_post_strat, estimate_post_strat_reg,
    fit_stratum_regression, EstimateResult, Method, OuterFunction, RegressionFit,
};
pub use problems::{derive_p_event, estimate_evsi, net_benefit, MedicalTheta, NestedProblem};
pub use stratify::{stratify, stratum, StratifiedIndex};
