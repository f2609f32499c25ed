//! Post-stratification of joint samples by recursive block sorting.
//!
//! Given `N = m^(2K)` joint samples, the outer variables are organised into
//! `sqrt(N)` strata by `K` passes of stable sorts:
//!
//! * pass `k` (for `k = 1..K`) partitions the current arrangement into
//!   `m^(k-1)` contiguous blocks of `m^(2K-k+1)` samples each and sorts every
//!   block in ascending order of coordinate `Y_k`;
//! * after pass `K`, the strata are the `sqrt(N)` contiguous blocks of
//!   `sqrt(N)` consecutive samples.
//!
//! Each pass refines the previous one, so samples that end up in the same
//! stratum are close in `Y_1` first, then in `Y_2` within ties of that
//! proximity, and so on. Only an index permutation is built; samples are
//! never copied, and the estimators consume views into the permutation.
//!
//! Sorting is stable with [`f64::total_cmp`] on coordinate values, so ties
//! keep their prior order and the result is a deterministic function of the
//! input order. A consequence worth relying on in tests: applying any
//! strictly increasing transform to a `Y` coordinate leaves the permutation
//! unchanged, because only the ranks of the coordinates matter.

use crate::dataset::{check_stratifiable, Dataset, JointSample};
use crate::error::{Error, Result};

/// The result of stratifying a dataset: a permutation of sample indices
/// together with the block geometry used to produce it.
///
/// Position `i` of the permutation holds the original index of the sample
/// occupying slot `i` of the sorted arrangement. Stratum `p` (0-based)
/// occupies slots `p * sqrt(N) .. (p + 1) * sqrt(N)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StratifiedIndex {
    perm: Vec<usize>,
    m: u32,
    k_dim: usize,
    n_total: usize,
    stratum_size: usize,
}

impl StratifiedIndex {
    /// The permutation: `perm()[i]` is the original index of the sample in
    /// sorted slot `i`.
    #[must_use]
    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    /// Branching factor `m` used to build the index.
    #[must_use]
    pub fn m(&self) -> u32 {
        self.m
    }

    /// Outer dimension `K` of the stratified dataset.
    #[must_use]
    pub fn k_dim(&self) -> usize {
        self.k_dim
    }

    /// Total number of samples `N = m^(2K)`.
    #[must_use]
    pub fn n_total(&self) -> usize {
        self.n_total
    }

    /// Samples per stratum, `sqrt(N) = m^K`. This also equals the number of
    /// strata.
    #[must_use]
    pub fn stratum_size(&self) -> usize {
        self.stratum_size
    }

    /// Number of strata, `sqrt(N) = m^K`.
    #[must_use]
    pub fn strata(&self) -> usize {
        self.stratum_size
    }

    /// Original sample indices of stratum `p`, in within-stratum order.
    ///
    /// # Errors
    ///
    /// Returns [`Error::StratumOutOfRange`] for `p >= self.strata()`.
    pub fn stratum_indices(&self, p: usize) -> Result<&[usize]> {
        if p >= self.strata() {
            return Err(Error::StratumOutOfRange {
                p,
                strata: self.strata(),
            });
        }
        let start = p * self.stratum_size;
        Ok(&self.perm[start..start + self.stratum_size])
    }
}

/// Stratifies `dataset` with branching factor `m`, producing the index
/// permutation described in the module docs.
///
/// # Errors
///
/// Returns [`Error::InvalidM`] for `m < 2` and [`Error::NotStratifiable`]
/// when `N != m^(2K)`.
pub fn stratify(dataset: &Dataset, m: u32) -> Result<StratifiedIndex> {
    check_stratifiable(dataset, m)?;
    let n = dataset.n();
    let k_dim = dataset.k_dim();
    let m_usize = m as usize;

    let mut perm: Vec<usize> = (0..n).collect();
    let mut block = n;
    for k in 0..k_dim {
        // Pass k + 1: m^k blocks of m^(2K - k) samples, each sorted stably
        // in ascending order of coordinate Y_(k+1).
        for chunk in perm.chunks_mut(block) {
            chunk.sort_by(|&a, &b| {
                dataset.sample(a).y()[k].total_cmp(&dataset.sample(b).y()[k])
            });
        }
        block /= m_usize;
    }

    // sqrt(N) = m^K samples per stratum; exact by the stratifiability check.
    let stratum_size = m_usize.pow(k_dim as u32);
    debug_assert_eq!(stratum_size * stratum_size, n);
    Ok(StratifiedIndex {
        perm,
        m,
        k_dim,
        n_total: n,
        stratum_size,
    })
}

/// The samples of stratum `p` in within-stratum order, as borrowed views.
///
/// # Errors
///
/// Returns [`Error::StratumOutOfRange`] for `p >= index.strata()`.
///
/// # Panics
///
/// Panics if `index` was not built from `dataset` (sample counts disagree).
pub fn stratum<'a>(
    dataset: &'a Dataset,
    index: &StratifiedIndex,
    p: usize,
) -> Result<Vec<&'a JointSample>> {
    assert_eq!(
        dataset.n(),
        index.n_total(),
        "stratified index was built from a dataset of {} samples, not {}",
        index.n_total(),
        dataset.n()
    );
    Ok(index
        .stratum_indices(p)?
        .iter()
        .map(|&i| dataset.sample(i))
        .collect())
}

#[cfg(test)]
mod tests {
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::dataset::JointSample;

    fn dataset_from_y(rows: &[Vec<f64>]) -> Dataset {
        Dataset::new(
            rows.iter()
                .enumerate()
                .map(|(i, y)| JointSample::new(vec![i as f64], y.clone()).unwrap())
                .collect(),
        )
        .unwrap()
    }

    fn random_dataset(rng: &mut impl Rng, n: usize, k_dim: usize) -> Dataset {
        Dataset::new(
            (0..n)
                .map(|_| {
                    let y: Vec<f64> = (0..k_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    JointSample::new(vec![rng.gen_range(-1.0..1.0)], y).unwrap()
                })
                .collect(),
        )
        .unwrap()
    }

    /// Literal transcription of the block-index arithmetic with 1-based
    /// (u, v) bookkeeping: pass k rearranges slots
    /// `(u - 1) * m^(2K - k + 1) + v` for `u = 1..m^(k-1)`,
    /// `v = 1..m^(2K - k + 1)` by gathering, sorting and scattering a fresh
    /// array. An independent code path from the chunked in-place sort.
    fn oracle_perm(dataset: &Dataset, m: usize) -> Vec<usize> {
        let n = dataset.n();
        let k_dim = dataset.k_dim();
        let mut order: Vec<usize> = (0..n).collect();
        for k in 1..=k_dim {
            let block = m.pow((2 * k_dim - k + 1) as u32);
            let blocks = m.pow((k - 1) as u32);
            let mut next = vec![0usize; n];
            for u in 1..=blocks {
                let mut slot: Vec<usize> = (1..=block)
                    .map(|v| order[(u - 1) * block + (v - 1)])
                    .collect();
                slot.sort_by(|&a, &b| {
                    dataset.sample(a).y()[k - 1].total_cmp(&dataset.sample(b).y()[k - 1])
                });
                for v in 1..=block {
                    next[(u - 1) * block + (v - 1)] = slot[v - 1];
                }
            }
            order = next;
        }
        order
    }

    #[test]
    fn one_dimensional_example() {
        let d = dataset_from_y(&[vec![3.0], vec![1.0], vec![4.0], vec![2.0]]);
        let idx = stratify(&d, 2).unwrap();
        assert_eq!(idx.perm(), &[1, 3, 0, 2]);
        assert_eq!(idx.stratum_size(), 2);
        assert_eq!(idx.strata(), 2);
        assert_eq!(idx.stratum_indices(0).unwrap(), &[1, 3]);
        assert_eq!(idx.stratum_indices(1).unwrap(), &[0, 2]);
    }

    #[test]
    fn k1_reduces_to_full_stable_argsort() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for m in [2usize, 3, 5] {
            let n = m * m;
            // Coarse grid forces ties so stability is exercised.
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| vec![f64::from(rng.gen_range(0i32..4)) / 2.0])
                .collect();
            let d = dataset_from_y(&rows);
            let idx = stratify(&d, m as u32).unwrap();

            let mut expect: Vec<usize> = (0..n).collect();
            expect.sort_by(|&a, &b| rows[a][0].total_cmp(&rows[b][0]));
            assert_eq!(idx.perm(), expect.as_slice(), "m = {m}");
        }
    }

    #[test]
    fn ties_keep_prior_order() {
        let d = dataset_from_y(&(0..16).map(|_| vec![0.5, 0.5]).collect::<Vec<_>>());
        let idx = stratify(&d, 2).unwrap();
        let identity: Vec<usize> = (0..16).collect();
        assert_eq!(idx.perm(), identity.as_slice());
    }

    #[test]
    fn matches_index_arithmetic_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for (m, k_dim) in [(2usize, 2usize), (3, 2), (2, 3)] {
            let n = m.pow(2 * k_dim as u32);
            let d = random_dataset(&mut rng, n, k_dim);
            let idx = stratify(&d, m as u32).unwrap();
            assert_eq!(
                idx.perm(),
                oracle_perm(&d, m).as_slice(),
                "m = {m}, K = {k_dim}"
            );
        }
    }

    #[test]
    fn perm_is_a_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let d = random_dataset(&mut rng, 81, 2);
        let idx = stratify(&d, 3).unwrap();
        let mut seen = idx.perm().to_vec();
        seen.sort_unstable();
        let identity: Vec<usize> = (0..81).collect();
        assert_eq!(seen, identity);
    }

    #[test]
    fn monotone_transforms_leave_permutation_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let d = random_dataset(&mut rng, 64, 3);
        let idx = stratify(&d, 2).unwrap();

        let transformed = Dataset::new(
            d.samples()
                .iter()
                .map(|s| {
                    let y = vec![s.y()[0].exp(), s.y()[1].powi(3), s.y()[2].atan()];
                    JointSample::new(s.x().to_vec(), y).unwrap()
                })
                .collect(),
        )
        .unwrap();
        let idx_t = stratify(&transformed, 2).unwrap();
        assert_eq!(idx.perm(), idx_t.perm());
    }

    #[test]
    fn stratum_contents_invariant_under_input_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let d = random_dataset(&mut rng, 81, 2);

        let mut shuffled: Vec<JointSample> = d.samples().to_vec();
        shuffled.shuffle(&mut rng);
        let d2 = Dataset::new(shuffled).unwrap();

        let idx1 = stratify(&d, 3).unwrap();
        let idx2 = stratify(&d2, 3).unwrap();
        for p in 0..idx1.strata() {
            let canon = |samples: Vec<&JointSample>| {
                let mut v: Vec<(Vec<u64>, Vec<u64>)> = samples
                    .into_iter()
                    .map(|s| {
                        (
                            s.y().iter().map(|b| b.to_bits()).collect(),
                            s.x().iter().map(|b| b.to_bits()).collect(),
                        )
                    })
                    .collect();
                v.sort();
                v
            };
            assert_eq!(
                canon(stratum(&d, &idx1, p).unwrap()),
                canon(stratum(&d2, &idx2, p).unwrap()),
                "stratum {p}"
            );
        }
    }

    #[test]
    fn strata_partition_the_dataset() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let d = random_dataset(&mut rng, 64, 3);
        let idx = stratify(&d, 2).unwrap();
        let mut all: Vec<usize> = Vec::new();
        for p in 0..idx.strata() {
            all.extend_from_slice(idx.stratum_indices(p).unwrap());
        }
        all.sort_unstable();
        let identity: Vec<usize> = (0..64).collect();
        assert_eq!(all, identity);
    }

    #[test]
    fn rejects_wrong_sample_count_and_bad_stratum() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let d = random_dataset(&mut rng, 20, 2);
        assert!(matches!(
            stratify(&d, 2),
            Err(Error::NotStratifiable { required: 16, .. })
        ));

        let d16 = random_dataset(&mut rng, 16, 2);
        let idx = stratify(&d16, 2).unwrap();
        assert!(matches!(
            idx.stratum_indices(4),
            Err(Error::StratumOutOfRange { p: 4, strata: 4 })
        ));
    }
}
