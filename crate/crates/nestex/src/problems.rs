//! Built-in nested-expectation benchmark problems.
//!
//! Each problem fixes a joint law for `(X, Y)`, an outer function `f`, and —
//! where tractable — a reference value for `E_Y[ f(E[X|Y]) ]` (or for the
//! EVSI quantity built from it), so estimators can be benchmarked against a
//! known target.
//!
//! * [`NestedProblem::EigToy`] — `Y ~ U(-1, 1)`, `θ ~ N(0, 1)` independent,
//!   `X = sqrt(2/π) exp(-2 (Y - θ)^2)`, `f = log`. The inner expectation has
//!   the closed form `sqrt(2/(5π)) exp(-2 y^2 / 5)`, giving the reference
//!   `I = ln(2/(5π))/2 - 2/15`.
//! * [`NestedProblem::EvsiSimple`] — `(θ, Y_1, Y_2, Y_3)` jointly normal
//!   with zero mean, unit variances and correlation `1/2` between every
//!   pair; `X = (θ, -θ)`, `f = max`. The posterior is
//!   `θ | Y ~ N((Y_1+Y_2+Y_3)/4, 5/8)`, and the expected value of sample
//!   information is `sqrt(3/(4π))`.
//! * [`NestedProblem::EvsiMedical`] — a three-treatment cost-effectiveness
//!   model. `θ` collects the model parameters (see [`MedicalTheta`]),
//!   `X = (NB_1, NB_2, NB_3)` are the treatments' net benefits, `Y` is a
//!   three-part trial summary for treatment 3, and `f = max`. There is no
//!   closed-form conditional sampler; the reference EVSI of `1031` is a
//!   high-accuracy external estimate used as the benchmark target.
//!
//! The expected value of sample information (EVSI) of a problem is
//!
//! ```text
//! EVSI = E_Y[ max_d E[NB_d | Y] ] - max_d E[NB_d],
//! ```
//!
//! estimated by [`estimate_evsi`] with both terms sharing a single sample
//! set.

use std::f64::consts::PI;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Binomial, Distribution, StandardNormal};

use crate::dataset::{required_samples, Dataset, JointSample};
use crate::error::{Error, Result};
use crate::estimators::{
    estimate_plain_mc, estimate_post_strat, estimate_post_strat_reg, run_nmc, Method,
    OuterFunction,
};

/// A benchmark problem: a joint sampler for `(X, Y)`, an optional
/// conditional sampler for `X | Y`, an outer function and dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NestedProblem {
    /// One-dimensional smoothing toy problem with `f = log`.
    EigToy,
    /// Equicorrelated-normal value-of-information problem with two
    /// treatments.
    EvsiSimple,
    /// Three-treatment medical cost-effectiveness model.
    EvsiMedical,
}

impl NestedProblem {
    /// All problems, in canonical presentation order.
    pub const ALL: [NestedProblem; 3] = [
        NestedProblem::EigToy,
        NestedProblem::EvsiSimple,
        NestedProblem::EvsiMedical,
    ];

    /// Canonical kebab-case tag, as used by the CLI.
    #[must_use]
    pub fn tag(self) -> &'static str {
        match self {
            NestedProblem::EigToy => "eig-toy",
            NestedProblem::EvsiSimple => "evsi-simple",
            NestedProblem::EvsiMedical => "evsi-medical",
        }
    }

    /// Inner dimension `J` of `X`.
    #[must_use]
    pub fn j_dim(self) -> usize {
        match self {
            NestedProblem::EigToy => 1,
            NestedProblem::EvsiSimple => 2,
            NestedProblem::EvsiMedical => 3,
        }
    }

    /// Outer dimension `K` of `Y`.
    #[must_use]
    pub fn k_dim(self) -> usize {
        match self {
            NestedProblem::EigToy => 1,
            NestedProblem::EvsiSimple | NestedProblem::EvsiMedical => 3,
        }
    }

    /// The outer function `f` the problem applies to inner expectations.
    #[must_use]
    pub fn outer_function(self) -> OuterFunction {
        match self {
            NestedProblem::EigToy => OuterFunction::Log,
            NestedProblem::EvsiSimple | NestedProblem::EvsiMedical => OuterFunction::MaxCoordinate,
        }
    }

    /// Whether a conditional sampler for `X | Y` is available.
    #[must_use]
    pub fn has_conditional(self) -> bool {
        match self {
            NestedProblem::EigToy | NestedProblem::EvsiSimple => true,
            NestedProblem::EvsiMedical => false,
        }
    }

    /// Whether the problem is an EVSI problem (so [`estimate_evsi`]
    /// applies).
    #[must_use]
    pub fn is_evsi(self) -> bool {
        matches!(
            self,
            NestedProblem::EvsiSimple | NestedProblem::EvsiMedical
        )
    }

    /// The benchmark target: the nested expectation itself for
    /// [`NestedProblem::EigToy`], the EVSI for the other two.
    #[must_use]
    pub fn reference_value(self) -> f64 {
        match self {
            NestedProblem::EigToy => 0.5 * (2.0 / (5.0 * PI)).ln() - 2.0 / 15.0,
            NestedProblem::EvsiSimple => (3.0 / (4.0 * PI)).sqrt(),
            NestedProblem::EvsiMedical => 1031.0,
        }
    }

    /// The analytic value of the subtracted EVSI baseline
    /// `max_d E[NB_d]`, where known.
    #[must_use]
    pub fn baseline_term(self) -> Option<f64> {
        match self {
            // max(E[θ], E[-θ]) = max(0, 0) = 0.
            NestedProblem::EvsiSimple => Some(0.0),
            NestedProblem::EigToy | NestedProblem::EvsiMedical => None,
        }
    }

    /// Draws `n` joint samples using a fresh deterministic stream for
    /// `seed`. Pure: identical arguments produce identical datasets.
    ///
    /// # Panics
    ///
    /// Panics if `n == 0`.
    #[must_use]
    pub fn sample_joint(self, n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_joint_with(&mut rng, n)
    }

    /// Draws `n` joint samples from an existing RNG stream.
    ///
    /// # Panics
    ///
    /// Panics if `n == 0`.
    #[must_use]
    pub fn sample_joint_with<R: Rng + ?Sized>(self, rng: &mut R, n: usize) -> Dataset {
        assert!(n >= 1, "cannot sample an empty dataset");
        let samples: Vec<JointSample> = (0..n).map(|_| self.draw_joint(rng)).collect();
        Dataset::new(samples).expect("samplers produce valid datasets")
    }

    fn draw_joint<R: Rng + ?Sized>(self, rng: &mut R) -> JointSample {
        let sample = match self {
            NestedProblem::EigToy => {
                let y = rng.gen_range(-1.0..1.0);
                let theta: f64 = rng.sample(StandardNormal);
                JointSample::new(vec![eig_kernel(y, theta)], vec![y])
            }
            NestedProblem::EvsiSimple => {
                // (θ, Y_1, Y_2, Y_3) = sqrt(1/2) g_0 + sqrt(1/2) g_i with
                // i.i.d. standard normal g's: unit variances, all pairwise
                // covariances 1/2.
                let h = 0.5f64.sqrt();
                let common: f64 = rng.sample(StandardNormal);
                let mut own = [0.0f64; 4];
                for slot in &mut own {
                    *slot = rng.sample(StandardNormal);
                }
                let theta = h * common + h * own[0];
                let y: Vec<f64> = (1..4).map(|i| h * common + h * own[i]).collect();
                JointSample::new(vec![theta, -theta], y)
            }
            NestedProblem::EvsiMedical => {
                let (theta, log_or3) = MedicalTheta::sample_with_log_or3(rng);
                let x = vec![
                    net_benefit(&theta, 1),
                    net_benefit(&theta, 2),
                    net_benefit(&theta, 3),
                ];
                // Trial summary for treatment 3 with n_p = 100 patients:
                // a log-odds-ratio estimate, a cost estimate, and a
                // side-effect count (stored as a real).
                let g1: f64 = rng.sample(StandardNormal);
                let g2: f64 = rng.sample(StandardNormal);
                let y1 = log_or3 + (4.0f64 / 100.0).sqrt() * g1;
                let y2 = theta.c_t[2] + (1.0e4f64 / 100.0).sqrt() * g2;
                let y3 = Binomial::new(100, theta.p_se[2])
                    .expect("side-effect probability lies in (0,1)")
                    .sample(rng) as f64;
                JointSample::new(x, vec![y1, y2, y3])
            }
        };
        sample.expect("samplers produce finite coordinates")
    }

    /// Draws `n` samples from the conditional law of `X` given `Y = y`,
    /// using a fresh deterministic stream for `seed`.
    ///
    /// # Errors
    ///
    /// Returns [`Error::ConditionalUnavailable`] for
    /// [`NestedProblem::EvsiMedical`].
    ///
    /// # Panics
    ///
    /// Panics if `y.len() != self.k_dim()`.
    pub fn sample_conditional(self, y: &[f64], n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_conditional_with(&mut rng, y, n)
    }

    /// Draws `n` conditional samples from an existing RNG stream.
    ///
    /// # Errors
    ///
    /// Returns [`Error::ConditionalUnavailable`] for
    /// [`NestedProblem::EvsiMedical`].
    ///
    /// # Panics
    ///
    /// Panics if `y.len() != self.k_dim()`.
    pub fn sample_conditional_with<R: Rng + ?Sized>(
        self,
        rng: &mut R,
        y: &[f64],
        n: usize,
    ) -> Result<Vec<Vec<f64>>> {
        if !self.has_conditional() {
            return Err(Error::ConditionalUnavailable {
                problem: self.tag(),
            });
        }
        assert_eq!(
            y.len(),
            self.k_dim(),
            "conditioning point has {} coordinates, problem has K = {}",
            y.len(),
            self.k_dim()
        );
        let draws = (0..n)
            .map(|_| match self {
                NestedProblem::EigToy => {
                    // θ is independent of Y, so X | Y = y is the kernel at a
                    // fresh θ.
                    let theta: f64 = rng.sample(StandardNormal);
                    vec![eig_kernel(y[0], theta)]
                }
                NestedProblem::EvsiSimple => {
                    // θ | Y = y ~ N((y_1+y_2+y_3)/4, 5/8) by the normal
                    // conditioning (Schur complement) identities.
                    let mu = (y[0] + y[1] + y[2]) / 4.0;
                    let sd = (5.0f64 / 8.0).sqrt();
                    let g: f64 = rng.sample(StandardNormal);
                    let theta = mu + sd * g;
                    vec![theta, -theta]
                }
                NestedProblem::EvsiMedical => unreachable!("guarded by has_conditional"),
            })
            .collect();
        Ok(draws)
    }
}

impl std::fmt::Display for NestedProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

impl std::str::FromStr for NestedProblem {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eig-toy" => Ok(NestedProblem::EigToy),
            "evsi-simple" => Ok(NestedProblem::EvsiSimple),
            "evsi-medical" => Ok(NestedProblem::EvsiMedical),
            other => Err(Error::UnknownProblem {
                got: other.to_string(),
            }),
        }
    }
}

/// The smoothing kernel of the toy problem:
/// `sqrt(2/π) exp(-2 (y - θ)^2)`.
fn eig_kernel(y: f64, theta: f64) -> f64 {
    (2.0 / PI).sqrt() * (-2.0 * (y - theta) * (y - theta)).exp()
}

/// Logistic function `1 / (1 + e^(-z))`, the inverse of the logit.
fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Draws from a bivariate normal with mean `mu` and covariance
/// `[[s11, s12], [s12, s22]]` via its Cholesky factor.
fn bivariate_normal<R: Rng + ?Sized>(
    rng: &mut R,
    mu: [f64; 2],
    s11: f64,
    s12: f64,
    s22: f64,
) -> [f64; 2] {
    let l11 = s11.sqrt();
    let l21 = s12 / l11;
    let l22 = (s22 - l21 * l21).sqrt();
    let g1: f64 = rng.sample(StandardNormal);
    let g2: f64 = rng.sample(StandardNormal);
    [mu[0] + l11 * g1, mu[1] + l21 * g1 + l22 * g2]
}

// ---------------------------------------------------------------------------
// The medical decision model
// ---------------------------------------------------------------------------

/// Parameter draw of the medical cost-effectiveness model.
///
/// Three treatments `d = 1, 2, 3` are compared. A treated patient may
/// experience the treatment effect (probability `p_e[d-1]`) and/or a side
/// effect (probability `p_se[d-1]`); the four outcome branches carry
/// different quality-adjusted life-year totals and costs, combined by
/// [`net_benefit`]. Treatment 1 is the reference: it causes no side effects
/// (`p_se[0] = 0`) and has no treatment cost (`c_t[0] = 0`); treatments 2
/// and 3 modify the event probability through odds ratios applied to
/// treatment 1's event probability.
///
/// The marginal laws of a draw are:
///
/// | field | law |
/// |---|---|
/// | `l` | `N(30, 25)` (life-years) |
/// | `q_e` | logit-normal: `logit(q_e) ~ N(0.6, 1/36)` |
/// | `q_se` | `N(0.7, 0.01)` |
/// | `c_e` | `N(2e5, 1e8)` |
/// | `c_se` | `N(1e5, 1e8)` |
/// | `(c_t[1], c_t[2])` | `N((1.5e4, 2e4), [[300, 100], [100, 500]])` |
/// | `p_e[0]` | `Beta(15, 85)` |
/// | `(or_e[0], or_e[1])` | log-normal: `(ln or_e[0], ln or_e[1]) ~ N((-1.5, -1.75), [[0.11, 0.02], [0.02, 0.06]])` |
/// | `p_e[1]`, `p_e[2]` | derived via [`derive_p_event`] from `p_e[0]` and the odds ratios |
/// | `(p_se[1], p_se[2])` | logit-normal: logits `~ N((-1.4, -1.1), [[0.10, 0.05], [0.05, 0.25]])` |
#[derive(Debug, Clone, PartialEq)]
pub struct MedicalTheta {
    /// Life-years gained on survival.
    pub l: f64,
    /// Quality factor of life with the treatment effect, in (0, 1).
    pub q_e: f64,
    /// Quality-adjusted life-years lost to a side effect.
    pub q_se: f64,
    /// Cost of experiencing the treatment effect.
    pub c_e: f64,
    /// Cost of experiencing a side effect.
    pub c_se: f64,
    /// One-off treatment costs, indexed by treatment; `c_t[0] = 0`.
    pub c_t: [f64; 3],
    /// Event (treatment effect) probabilities, indexed by treatment.
    pub p_e: [f64; 3],
    /// Odds ratios of treatments 2 and 3 against treatment 1.
    pub or_e: [f64; 2],
    /// Side-effect probabilities, indexed by treatment; `p_se[0] = 0`.
    pub p_se: [f64; 3],
}

impl MedicalTheta {
    /// Willingness-to-pay conversion between quality-adjusted life-years
    /// and currency in the net-benefit formula.
    pub const LAMBDA: f64 = 75_000.0;

    /// Draws one parameter vector from the prior.
    #[must_use]
    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self::sample_with_log_or3(rng).0
    }

    /// Draws one parameter vector, also returning `ln or_e[1]` (the
    /// underlying normal value for treatment 3's odds ratio), which the
    /// joint sampler reuses for the trial summary without a lossy
    /// `exp`/`ln` round trip.
    fn sample_with_log_or3<R: Rng + ?Sized>(rng: &mut R) -> (Self, f64) {
        let g: f64 = rng.sample(StandardNormal);
        let l = 30.0 + 5.0 * g;
        let g: f64 = rng.sample(StandardNormal);
        let q_e = sigmoid(0.6 + g / 6.0);
        let g: f64 = rng.sample(StandardNormal);
        let q_se = 0.7 + 0.1 * g;
        let g: f64 = rng.sample(StandardNormal);
        let c_e = 2.0e5 + 1.0e4 * g;
        let g: f64 = rng.sample(StandardNormal);
        let c_se = 1.0e5 + 1.0e4 * g;
        let [c_t2, c_t3] = bivariate_normal(rng, [1.5e4, 2.0e4], 300.0, 100.0, 500.0);
        let p_e1 = Beta::new(15.0, 85.0)
            .expect("fixed beta parameters are valid")
            .sample(rng);
        let [log_or2, log_or3] = bivariate_normal(rng, [-1.5, -1.75], 0.11, 0.02, 0.06);
        let or_e = [log_or2.exp(), log_or3.exp()];
        let p_e2 = derive_p_event(p_e1, or_e[0])
            .expect("beta draws lie strictly inside (0,1) and odds ratios are positive");
        let p_e3 = derive_p_event(p_e1, or_e[1])
            .expect("beta draws lie strictly inside (0,1) and odds ratios are positive");
        let [lp_se2, lp_se3] = bivariate_normal(rng, [-1.4, -1.1], 0.10, 0.05, 0.25);
        let theta = Self {
            l,
            q_e,
            q_se,
            c_e,
            c_se,
            c_t: [0.0, c_t2, c_t3],
            p_e: [p_e1, p_e2, p_e3],
            or_e,
            p_se: [0.0, sigmoid(lp_se2), sigmoid(lp_se3)],
        };
        (theta, log_or3)
    }
}

/// Net monetary benefit of treatment `d` (in `{1, 2, 3}`) under parameters
/// `theta`: the four outcome branches (effect and side effect, side effect
/// only, effect only, neither) weighted by their probabilities, minus the
/// treatment cost.
///
/// # Panics
///
/// Panics if `d` is not 1, 2 or 3.
#[must_use]
pub fn net_benefit(theta: &MedicalTheta, d: usize) -> f64 {
    assert!((1..=3).contains(&d), "treatment index must be 1, 2 or 3, got {d}");
    let i = d - 1;
    let p_se = theta.p_se[i];
    let p_e = theta.p_e[i];
    let lambda = MedicalTheta::LAMBDA;

    let effect_and_side =
        lambda * (theta.l * (1.0 + theta.q_e) / 2.0 - theta.q_se) - (theta.c_se + theta.c_e);
    let side_only = lambda * (theta.l - theta.q_se) - theta.c_se;
    let effect_only = lambda * theta.l * (1.0 + theta.q_e) / 2.0 - theta.c_e;
    let neither = lambda * theta.l;

    p_se * p_e * effect_and_side
        + p_se * (1.0 - p_e) * side_only
        + (1.0 - p_se) * p_e * effect_only
        + (1.0 - p_se) * (1.0 - p_e) * neither
        - theta.c_t[i]
}

/// Converts a baseline event probability and an odds ratio into the derived
/// event probability: with `ω = p1 / (1 - p1)`, the result is
/// `or·ω / (1 + or·ω)`.
///
/// # Errors
///
/// Returns [`Error::PEventDomain`] unless `p1` lies strictly in `(0, 1)`
/// and `odds_ratio` is positive and finite.
pub fn derive_p_event(p1: f64, odds_ratio: f64) -> Result<f64> {
    if !(p1 > 0.0 && p1 < 1.0) || !odds_ratio.is_finite() || odds_ratio <= 0.0 {
        return Err(Error::PEventDomain { p1, odds_ratio });
    }
    let odds = p1 / (1.0 - p1);
    let scaled = odds_ratio * odds;
    Ok(scaled / (1.0 + scaled))
}

// ---------------------------------------------------------------------------
// EVSI
// ---------------------------------------------------------------------------

/// Estimates the EVSI `E_Y[max_d E[NB_d | Y]] - max_d E[NB_d]` of an EVSI
/// problem at total sampling cost `m^(2K)`.
///
/// For the stratified methods, one joint dataset of `m^(2K)` samples is
/// drawn and both terms are computed from it: the nested term by the chosen
/// estimator, the baseline as the maximum of the grand column means. For
/// nested Monte Carlo, `N_p = N_q = m^K` (the same total cost) and the
/// baseline is the maximum of the grand means over all conditional draws.
///
/// # Errors
///
/// * [`Error::NotEvsi`] for [`NestedProblem::EigToy`],
/// * [`Error::InvalidM`] for `m < 2`,
/// * [`Error::ConditionalUnavailable`] for NMC on a problem without a
///   conditional sampler,
/// * whatever the underlying estimator reports.
pub fn estimate_evsi(problem: &NestedProblem, method: Method, m: u32, seed: u64) -> Result<f64> {
    if !problem.is_evsi() {
        return Err(Error::NotEvsi {
            problem: problem.tag(),
        });
    }
    if m < 2 {
        return Err(Error::InvalidM { m });
    }
    let f = problem.outer_function();
    match method {
        Method::Nmc => {
            let half = checked_count(u128::from(m).saturating_pow(problem.k_dim() as u32))?;
            let run = run_nmc(problem, half, half, seed)?;
            let baseline = run
                .x_grand_mean
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
            Ok(run.value - baseline)
        }
        Method::PostStrat | Method::PostStratReg => {
            let n = checked_count(required_samples(m, problem.k_dim()))?;
            let dataset = problem.sample_joint(n, seed);
            let nested = match method {
                Method::PostStrat => estimate_post_strat(&dataset, &f, m)?.value,
                Method::PostStratReg => estimate_post_strat_reg(&dataset, &f, m)?.value,
                Method::Nmc => unreachable!(),
            };
            let baseline = estimate_plain_mc(&dataset, &f)?;
            Ok(nested - baseline)
        }
    }
}

fn checked_count(n: u128) -> Result<usize> {
    usize::try_from(n).map_err(|_| Error::InvalidConfig {
        detail: format!("sample count {n} exceeds the addressable size"),
    })
}
