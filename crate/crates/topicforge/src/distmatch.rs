//! Distribution arithmetic over the 21-category taxonomy.
//!
//! Everything downstream of labeling reduces to a handful of operations on
//! count vectors and simplex shares: total variation distance, power
//! smoothing (`p ∝ n^α`), upsample factors, and coverage summaries. All of
//! them live here as pure functions so the sampler and report layers never
//! do their own arithmetic.
//!
//! Two normalizations coexist and must not be conflated:
//!
//! * **label shares** — each category's fraction of all label occurrences.
//!   Sums to 1; this is the canonical form fed to [`tvd`] and smoothing.
//! * **document frequencies** — the fraction of items carrying each
//!   category. Sums to the mean labels per item (≥ or ≤ 1), so it is *not*
//!   a simplex point and deliberately has its own function and return type.

use std::borrow::Borrow;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::taxonomy::{LabelSet, CATEGORIES, CATEGORY_COUNT};

/// Tolerance for the simplex invariant (shares must sum to 1 within this).
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum DistError {
    #[error("all category counts are zero")]
    DegenerateCounts,
    #[error("empty label-set input")]
    EmptyInput,
    #[error("share entry {index} is {value}; shares must be finite and nonnegative")]
    InvalidShare { index: usize, value: f64 },
    #[error("shares sum to {sum}; expected 1 within {SIMPLEX_TOLERANCE}")]
    NotNormalized { sum: f64 },
    #[error("weights sum to {sum}; expected a positive total")]
    DegenerateWeights { sum: f64 },
    #[error("smoothing exponent must lie in (0, 1], got {0}")]
    AlphaOutOfRange(f64),
    #[error("category {name:?} has zero count; its upsample factor is undefined")]
    ZeroCountCategory { name: &'static str },
    #[error("minimum share is zero; max/min ratio is undefined")]
    ZeroMinShare,
    #[error("rare-category window must lie in 1..={CATEGORY_COUNT}, got {0}")]
    RareWindowOutOfRange(usize),
    #[error("error rate must lie in [0, 1], got {0}")]
    ErrorRateOutOfRange(f64),
}

/// Per-category occurrence counts, indexed in canonical category order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CountVector([u64; CATEGORY_COUNT]);

impl CountVector {
    pub fn new(counts: [u64; CATEGORY_COUNT]) -> Self {
        Self(counts)
    }

    pub fn zero() -> Self {
        Self([0; CATEGORY_COUNT])
    }

    pub fn get(&self, index: usize) -> u64 {
        self.0[index]
    }

    pub fn as_array(&self) -> &[u64; CATEGORY_COUNT] {
        &self.0
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&c| c == 0)
    }

    /// Increment the count of every category in `labels`.
    pub fn add_labels(&mut self, labels: LabelSet) {
        for index in labels.iter() {
            self.0[index] += 1;
        }
    }

    /// Decrement the count of every category in `labels`.
    ///
    /// Panics on underflow: removing labels that were never added is a
    /// bookkeeping bug in the caller, not a recoverable condition.
    pub fn remove_labels(&mut self, labels: LabelSet) {
        for index in labels.iter() {
            self.0[index] = self.0[index]
                .checked_sub(1)
                .expect("label count underflow: removed a label that was never counted");
        }
    }
}

impl std::ops::Index<usize> for CountVector {
    type Output = u64;

    fn index(&self, index: usize) -> &u64 {
        &self.0[index]
    }
}

/// A point on the 21-category probability simplex: nonnegative shares
/// summing to 1 within [`SIMPLEX_TOLERANCE`]. Construction validates; every
/// function accepting this type may assume the invariant.
#[derive(Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; CATEGORY_COUNT]", into = "[f64; CATEGORY_COUNT]")]
pub struct CategoricalShares([f64; CATEGORY_COUNT]);

impl CategoricalShares {
    /// Validate an already-normalized share vector.
    pub fn new(shares: [f64; CATEGORY_COUNT]) -> Result<Self, DistError> {
        for (index, &value) in shares.iter().enumerate() {
            if !value.is_finite() || value < 0.0 {
                return Err(DistError::InvalidShare { index, value });
            }
        }
        let sum: f64 = shares.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(DistError::NotNormalized { sum });
        }
        Ok(Self(shares))
    }

    /// Normalize arbitrary nonnegative weights onto the simplex.
    ///
    /// This is the entry point for rounded percentage columns whose printed
    /// values sum near — but not exactly to — 100.
    pub fn from_weights(weights: &[f64; CATEGORY_COUNT]) -> Result<Self, DistError> {
        for (index, &value) in weights.iter().enumerate() {
            if !value.is_finite() || value < 0.0 {
                return Err(DistError::InvalidShare { index, value });
            }
        }
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 {
            return Err(DistError::DegenerateWeights { sum });
        }
        Ok(Self::from_normalized(weights.map(|w| w / sum)))
    }

    /// The uniform distribution: every category at 1/21.
    pub fn uniform() -> Self {
        Self::from_normalized([1.0 / CATEGORY_COUNT as f64; CATEGORY_COUNT])
    }

    /// Internal constructor for arrays already normalized by our own
    /// arithmetic; skips revalidation beyond a debug check.
    fn from_normalized(shares: [f64; CATEGORY_COUNT]) -> Self {
        debug_assert!((shares.iter().sum::<f64>() - 1.0).abs() <= SIMPLEX_TOLERANCE);
        Self(shares)
    }

    pub fn get(&self, index: usize) -> f64 {
        self.0[index]
    }

    pub fn as_array(&self) -> &[f64; CATEGORY_COUNT] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.0.iter().copied()
    }
}

impl fmt::Debug for CategoricalShares {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("CategoricalShares").field(&self.0).finish()
    }
}

impl TryFrom<[f64; CATEGORY_COUNT]> for CategoricalShares {
    type Error = DistError;

    fn try_from(shares: [f64; CATEGORY_COUNT]) -> Result<Self, DistError> {
        Self::new(shares)
    }
}

impl From<CategoricalShares> for [f64; CATEGORY_COUNT] {
    fn from(shares: CategoricalShares) -> Self {
        shares.0
    }
}

/// Power-smoothing exponent, restricted to (0, 1]. 1 is the identity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct SmoothingAlpha(f64);

impl SmoothingAlpha {
    pub const IDENTITY: SmoothingAlpha = SmoothingAlpha(1.0);

    pub fn new(alpha: f64) -> Result<Self, DistError> {
        if alpha.is_finite() && alpha > 0.0 && alpha <= 1.0 {
            Ok(Self(alpha))
        } else {
            Err(DistError::AlphaOutOfRange(alpha))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for SmoothingAlpha {
    type Error = DistError;

    fn try_from(alpha: f64) -> Result<Self, DistError> {
        Self::new(alpha)
    }
}

impl From<SmoothingAlpha> for f64 {
    fn from(alpha: SmoothingAlpha) -> f64 {
        alpha.0
    }
}

/// Tally label occurrences: entry `j` is the number of items whose label
/// set contains category `j`. An empty input yields the zero vector.
pub fn counts_from_labelsets<I>(labelsets: I) -> CountVector
where
    I: IntoIterator,
    I::Item: Borrow<LabelSet>,
{
    let mut counts = CountVector::zero();
    for labels in labelsets {
        counts.add_labels(*labels.borrow());
    }
    counts
}

/// Normalize counts to label shares: `share[j] = counts[j] / Σ counts`.
pub fn shares_from_counts(counts: &CountVector) -> Result<CategoricalShares, DistError> {
    let total = counts.total();
    if total == 0 {
        return Err(DistError::DegenerateCounts);
    }
    let total = total as f64;
    Ok(CategoricalShares::from_normalized(
        counts.0.map(|c| c as f64 / total),
    ))
}

/// Per-category document frequency: entry `j` is the fraction of items
/// whose label set contains category `j`.
///
/// Entries lie in [0, 1] individually but the vector sums to the mean
/// label count per item, so this is not a simplex point and is returned as
/// a plain array.
pub fn doc_frequencies<I>(labelsets: I) -> Result<[f64; CATEGORY_COUNT], DistError>
where
    I: IntoIterator,
    I::Item: Borrow<LabelSet>,
{
    let mut items = 0u64;
    let mut counts = CountVector::zero();
    for labels in labelsets {
        items += 1;
        counts.add_labels(*labels.borrow());
    }
    if items == 0 {
        return Err(DistError::EmptyInput);
    }
    let items = items as f64;
    Ok(counts.0.map(|c| c as f64 / items))
}

/// Total variation distance between two share vectors: `0.5 · Σ |p_j − q_j|`.
///
/// Symmetric, zero iff equal, and bounded by 1. Simplex validity is
/// guaranteed by the argument type, so this cannot fail.
pub fn tvd(p: &CategoricalShares, q: &CategoricalShares) -> f64 {
    0.5 * p
        .0
        .iter()
        .zip(&q.0)
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
}

/// Power smoothing: shares proportional to `counts[j]^α`, renormalized.
///
/// `α = 1` takes the [`shares_from_counts`] path verbatim so the identity
/// case is bit-for-bit identical, not merely close. Zero counts stay at
/// zero share (`0^α = 0` for α > 0).
pub fn smooth(counts: &CountVector, alpha: SmoothingAlpha) -> Result<CategoricalShares, DistError> {
    if alpha.get() == 1.0 {
        return shares_from_counts(counts);
    }
    if counts.is_zero() {
        return Err(DistError::DegenerateCounts);
    }
    let weights = counts.0.map(|c| (c as f64).powf(alpha.get()));
    let sum: f64 = weights.iter().sum();
    Ok(CategoricalShares::from_normalized(weights.map(|w| w / sum)))
}

/// Ratio of smoothed share to raw share per category:
/// `smooth(counts, α)[j] / shares_from_counts(counts)[j]`.
///
/// Every category participates in the result, so any zero count is an
/// error — the factor there would be 0/0, not a large number.
pub fn upsample_factors(
    counts: &CountVector,
    alpha: SmoothingAlpha,
) -> Result<[f64; CATEGORY_COUNT], DistError> {
    if counts.is_zero() {
        return Err(DistError::DegenerateCounts);
    }
    for (index, &count) in counts.0.iter().enumerate() {
        if count == 0 {
            return Err(DistError::ZeroCountCategory {
                name: CATEGORIES[index].name,
            });
        }
    }
    let smoothed = smooth(counts, alpha)?;
    let raw = shares_from_counts(counts)?;
    let mut factors = [0.0; CATEGORY_COUNT];
    for j in 0..CATEGORY_COUNT {
        factors[j] = smoothed.get(j) / raw.get(j);
    }
    Ok(factors)
}

/// Mean upsample factor over the `k` smallest-count categories (ties broken
/// by canonical index).
pub fn rare_category_mean_upsample(
    counts: &CountVector,
    alpha: SmoothingAlpha,
    k: usize,
) -> Result<f64, DistError> {
    if k == 0 || k > CATEGORY_COUNT {
        return Err(DistError::RareWindowOutOfRange(k));
    }
    let factors = upsample_factors(counts, alpha)?;
    let mut order: Vec<usize> = (0..CATEGORY_COUNT).collect();
    order.sort_by_key(|&j| (counts.get(j), j));
    let sum: f64 = order[..k].iter().map(|&j| factors[j]).sum();
    Ok(sum / k as f64)
}

/// Largest share divided by smallest share. Errors when the minimum is
/// zero rather than reporting infinity.
pub fn max_min_ratio(shares: &CategoricalShares) -> Result<f64, DistError> {
    let max = shares.iter().fold(f64::MIN, f64::max);
    let min = shares.iter().fold(f64::MAX, f64::min);
    if min == 0.0 {
        return Err(DistError::ZeroMinShare);
    }
    Ok(max / min)
}

/// Convergence threshold implied by a classifier error rate: the largest
/// TVD shift that rate could induce is `error_rate × tvd(target, uniform)`,
/// so asking the sampler to do better than that would be fitting noise.
pub fn tau_bound(error_rate: f64, target: &CategoricalShares) -> Result<f64, DistError> {
    if !(0.0..=1.0).contains(&error_rate) || error_rate.is_nan() {
        return Err(DistError::ErrorRateOutOfRange(error_rate));
    }
    Ok(error_rate * tvd(target, &CategoricalShares::uniform()))
}

/// Label-coverage summary for a corpus.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageStats {
    /// Mean number of labels per item.
    pub mean_labels: f64,
    /// Fraction of items with at least one label, in [0, 1].
    pub pct_nonzero: f64,
    /// Fraction of items with two or more labels, in [0, 1].
    pub pct_ge2: f64,
}

/// Compute [`CoverageStats`] over a nonempty sequence of label sets.
pub fn coverage_stats<I>(labelsets: I) -> Result<CoverageStats, DistError>
where
    I: IntoIterator,
    I::Item: Borrow<LabelSet>,
{
    let mut items = 0u64;
    let mut labels = 0u64;
    let mut nonzero = 0u64;
    let mut ge2 = 0u64;
    for set in labelsets {
        let len = set.borrow().len();
        items += 1;
        labels += len as u64;
        if len >= 1 {
            nonzero += 1;
        }
        if len >= 2 {
            ge2 += 1;
        }
    }
    if items == 0 {
        return Err(DistError::EmptyInput);
    }
    let items = items as f64;
    Ok(CoverageStats {
        mean_labels: labels as f64 / items,
        pct_nonzero: nonzero as f64 / items,
        pct_ge2: ge2 as f64 / items,
    })
}

/// Render counts and their shares as a 21-row `name,count,share` table,
/// one category per line in canonical order.
pub fn name_count_share_table(counts: &CountVector) -> Result<String, DistError> {
    let shares = shares_from_counts(counts)?;
    let mut out = String::new();
    for (j, category) in CATEGORIES.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{}\n",
            category.name,
            counts.get(j),
            shares.get(j)
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::LabelSet;
    use approx::assert_abs_diff_eq;

    /// Frozen per-category occurrence counts for the reference corpus,
    /// canonical order. Total 210,011.
    const REFERENCE_COUNTS: [u64; CATEGORY_COUNT] = [
        95_179, 75_973, 22_900, 5_385, 3_944, 2_034, 1_273, 603, 547, 427, 384, 324, 292, 256,
        204, 112, 87, 47, 15, 13, 12,
    ];

    /// Frozen label-share columns (percent) for the reference corpus and
    /// four survey corpora, canonical order.
    const REFERENCE_PCT: [f64; CATEGORY_COUNT] = [
        45.32, 36.18, 10.90, 2.56, 1.88, 0.97, 0.61, 0.29, 0.26, 0.20, 0.18, 0.15, 0.14, 0.12,
        0.10, 0.05, 0.04, 0.02, 0.01, 0.01, 0.01,
    ];
    const TEXTBOOK_PCT: [f64; CATEGORY_COUNT] = [
        0.57, 11.37, 14.39, 2.51, 12.59, 0.04, 15.72, 5.36, 11.86, 6.22, 0.10, 1.12, 4.53, 7.81,
        1.08, 0.39, 0.66, 0.74, 0.31, 2.39, 0.24,
    ];
    const NATURAL_PCT: [f64; CATEGORY_COUNT] = [
        12.09, 18.30, 7.19, 9.24, 8.45, 0.63, 2.86, 3.84, 4.43, 11.77, 5.72, 3.10, 0.51, 4.86,
        0.78, 0.21, 0.51, 3.54, 0.56, 0.13, 1.30,
    ];
    const NEMOTRON_PCT: [f64; CATEGORY_COUNT] = [
        7.44, 34.67, 3.78, 0.99, 40.41, 1.76, 1.13, 2.94, 0.67, 0.81, 0.02, 0.11, 0.10, 4.49,
        0.15, 0.05, 0.01, 0.39, 0.04, 0.02, 0.01,
    ];
    const BIOALCHEMY_PCT: [f64; CATEGORY_COUNT] = [
        24.95, 36.89, 16.75, 2.80, 6.63, 0.50, 0.79, 2.71, 0.31, 4.57, 0.06, 0.74, 0.64, 1.32,
        0.11, 0.09, 0.01, 0.05, 0.01, 0.02, 0.06,
    ];

    fn reference_counts() -> CountVector {
        CountVector::new(REFERENCE_COUNTS)
    }

    fn set(indices: &[usize]) -> LabelSet {
        LabelSet::from_indices(indices.iter().copied())
    }

    fn alpha(a: f64) -> SmoothingAlpha {
        SmoothingAlpha::new(a).unwrap()
    }

    #[test]
    fn reference_counts_total() {
        assert_eq!(reference_counts().total(), 210_011);
    }

    #[test]
    fn counts_from_labelsets_tallies_occurrences() {
        let counts = counts_from_labelsets([set(&[0]), set(&[0, 1])]);
        assert_eq!(counts.get(0), 2);
        assert_eq!(counts.get(1), 1);
        assert_eq!(counts.total(), 3);
    }

    #[test]
    fn counts_from_all_empty_labelsets_is_zero() {
        let counts = counts_from_labelsets(vec![LabelSet::EMPTY; 4]);
        assert!(counts.is_zero());
        assert_eq!(counts, CountVector::zero());
    }

    #[test]
    fn count_vector_add_remove_roundtrip() {
        let mut counts = reference_counts();
        counts.add_labels(set(&[0, 20]));
        counts.remove_labels(set(&[0, 20]));
        assert_eq!(counts, reference_counts());
    }

    #[test]
    #[should_panic(expected = "underflow")]
    fn count_vector_remove_below_zero_panics() {
        let mut counts = CountVector::zero();
        counts.remove_labels(set(&[3]));
    }

    #[test]
    fn shares_from_reference_counts_match_frozen_percentages() {
        let shares = shares_from_counts(&reference_counts()).unwrap();
        // Dominant and rarest cells pinned tightly; the rest within half
        // the two-decimal display quantum.
        assert_abs_diff_eq!(100.0 * shares.get(0), 45.32, epsilon = 0.005);
        assert_abs_diff_eq!(100.0 * shares.get(20), 0.01, epsilon = 0.005);
        for j in 0..CATEGORY_COUNT {
            assert_abs_diff_eq!(100.0 * shares.get(j), REFERENCE_PCT[j], epsilon = 0.005);
        }
    }

    #[test]
    fn shares_from_uniform_counts_are_uniform() {
        let shares = shares_from_counts(&CountVector::new([1; CATEGORY_COUNT])).unwrap();
        for j in 0..CATEGORY_COUNT {
            assert_abs_diff_eq!(shares.get(j), 1.0 / 21.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn shares_from_zero_counts_is_an_error() {
        assert_eq!(
            shares_from_counts(&CountVector::zero()),
            Err(DistError::DegenerateCounts)
        );
    }

    #[test]
    fn doc_frequencies_hand_example() {
        let freqs = doc_frequencies([set(&[0]), set(&[0, 1])]).unwrap();
        assert_eq!(freqs[0], 1.0);
        assert_eq!(freqs[1], 0.5);
        assert_eq!(freqs[2], 0.0);
    }

    #[test]
    fn doc_frequencies_saturate_at_one() {
        let all = LabelSet::from_indices(0..CATEGORY_COUNT);
        let freqs = doc_frequencies(vec![all; 3]).unwrap();
        assert!(freqs.iter().all(|&f| f == 1.0));
    }

    #[test]
    fn doc_frequencies_sum_to_mean_labels() {
        // 93 single-label + 7 double-label items: mean 1.07 labels/item.
        let mut sets = vec![set(&[0]); 93];
        sets.extend(vec![set(&[1, 2]); 7]);
        let freqs = doc_frequencies(&sets).unwrap();
        let stats = coverage_stats(&sets).unwrap();
        assert_abs_diff_eq!(freqs.iter().sum::<f64>(), 1.07, epsilon = 1e-9);
        assert_abs_diff_eq!(freqs.iter().sum::<f64>(), stats.mean_labels, epsilon = 1e-9);
    }

    #[test]
    fn doc_frequencies_reject_empty_input() {
        assert_eq!(
            doc_frequencies(std::iter::empty::<LabelSet>()),
            Err(DistError::EmptyInput)
        );
    }

    #[test]
    fn tvd_of_identical_shares_is_zero() {
        let p = CategoricalShares::from_weights(&REFERENCE_PCT).unwrap();
        assert_eq!(tvd(&p, &p), 0.0);
    }

    #[test]
    fn tvd_is_symmetric_and_bounded() {
        let p = CategoricalShares::from_weights(&TEXTBOOK_PCT).unwrap();
        let q = CategoricalShares::from_weights(&NEMOTRON_PCT).unwrap();
        let d = tvd(&p, &q);
        assert_eq!(d, tvd(&q, &p));
        assert!(d > 0.0 && d <= 1.0);
    }

    #[test]
    fn tvd_between_survey_corpora_and_reference_matches_frozen_values() {
        let reference = CategoricalShares::from_weights(&REFERENCE_PCT).unwrap();
        for (column, expected) in [
            (&TEXTBOOK_PCT, 0.71),
            (&NATURAL_PCT, 0.55),
            (&NEMOTRON_PCT, 0.48),
            (&BIOALCHEMY_PCT, 0.21),
        ] {
            let shares = CategoricalShares::from_weights(column).unwrap();
            assert_abs_diff_eq!(tvd(&reference, &shares), expected, epsilon = 0.01);
        }
    }

    #[test]
    fn smooth_identity_alpha_is_bitwise_equal_to_raw_shares() {
        let counts = reference_counts();
        let smoothed = smooth(&counts, SmoothingAlpha::IDENTITY).unwrap();
        let raw = shares_from_counts(&counts).unwrap();
        for j in 0..CATEGORY_COUNT {
            assert_eq!(smoothed.get(j).to_bits(), raw.get(j).to_bits());
        }
    }

    #[test]
    fn smooth_matches_frozen_share_cells() {
        let counts = reference_counts();
        let half = smooth(&counts, alpha(0.5)).unwrap();
        assert_abs_diff_eq!(100.0 * half.get(0), 26.97, epsilon = 0.02);
        let point3 = smooth(&counts, alpha(0.3)).unwrap();
        assert_abs_diff_eq!(100.0 * point3.get(20), 1.12, epsilon = 0.02);
        let point7 = smooth(&counts, alpha(0.7)).unwrap();
        assert_abs_diff_eq!(100.0 * point7.get(0), 36.05, epsilon = 0.02);
    }

    #[test]
    fn smooth_keeps_zero_counts_at_zero_share() {
        let mut raw = [0u64; CATEGORY_COUNT];
        raw[0] = 2;
        let shares = smooth(&CountVector::new(raw), alpha(0.5)).unwrap();
        assert_eq!(shares.get(0), 1.0);
        assert_eq!(shares.get(1), 0.0);
    }

    #[test]
    fn smooth_rejects_zero_counts() {
        assert_eq!(
            smooth(&CountVector::zero(), alpha(0.5)),
            Err(DistError::DegenerateCounts)
        );
    }

    #[test]
    fn upsample_factors_identity_alpha_is_all_ones() {
        let factors = upsample_factors(&reference_counts(), SmoothingAlpha::IDENTITY).unwrap();
        for f in factors {
            assert_abs_diff_eq!(f, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn upsample_factors_match_frozen_cells() {
        let counts = reference_counts();
        let half = upsample_factors(&counts, alpha(0.5)).unwrap();
        assert_abs_diff_eq!(half[18], 47.4, epsilon = 0.5); // count 15
        let point3 = upsample_factors(&counts, alpha(0.3)).unwrap();
        assert_abs_diff_eq!(point3[20], 195.5, epsilon = 1.0); // count 12
    }

    #[test]
    fn upsample_factor_for_zero_count_category_is_an_error() {
        let mut raw = REFERENCE_COUNTS;
        raw[20] = 0;
        let err = upsample_factors(&CountVector::new(raw), alpha(0.5)).unwrap_err();
        assert_eq!(
            err,
            DistError::ZeroCountCategory {
                name: CATEGORIES[20].name
            }
        );
    }

    #[test]
    fn upsample_factors_form_a_change_of_measure() {
        // Σ_j factor_j · raw_share_j telescopes to Σ_j smoothed_share_j = 1.
        let counts = reference_counts();
        let raw = shares_from_counts(&counts).unwrap();
        for a in [0.3, 0.5, 0.7, 0.9] {
            let factors = upsample_factors(&counts, alpha(a)).unwrap();
            let total: f64 = (0..CATEGORY_COUNT).map(|j| factors[j] * raw.get(j)).sum();
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn rare_category_mean_upsample_matches_frozen_values() {
        let counts = reference_counts();
        assert_abs_diff_eq!(
            rare_category_mean_upsample(&counts, SmoothingAlpha::IDENTITY, 5).unwrap(),
            1.0,
            epsilon = 1e-9
        );
        assert_abs_diff_eq!(
            rare_category_mean_upsample(&counts, alpha(0.5), 5).unwrap(),
            39.6,
            epsilon = 0.2
        );
        assert_abs_diff_eq!(
            rare_category_mean_upsample(&counts, alpha(0.3), 5).unwrap(),
            134.3,
            epsilon = 0.5
        );
    }

    #[test]
    fn rare_category_window_bounds() {
        let counts = reference_counts();
        assert!(rare_category_mean_upsample(&counts, alpha(0.5), 21).is_ok());
        assert_eq!(
            rare_category_mean_upsample(&counts, alpha(0.5), 0),
            Err(DistError::RareWindowOutOfRange(0))
        );
        assert_eq!(
            rare_category_mean_upsample(&counts, alpha(0.5), 22),
            Err(DistError::RareWindowOutOfRange(22))
        );
    }

    #[test]
    fn max_min_ratio_matches_frozen_values() {
        let counts = reference_counts();
        let half = smooth(&counts, alpha(0.5)).unwrap();
        assert_abs_diff_eq!(max_min_ratio(&half).unwrap(), 89.0, epsilon = 2.0);
        let point7 = smooth(&counts, alpha(0.7)).unwrap();
        assert_abs_diff_eq!(max_min_ratio(&point7).unwrap(), 536.0, epsilon = 5.0);
        assert_abs_diff_eq!(
            max_min_ratio(&CategoricalShares::uniform()).unwrap(),
            1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn max_min_ratio_rejects_zero_minimum() {
        let mut weights = [1.0; CATEGORY_COUNT];
        weights[5] = 0.0;
        let shares = CategoricalShares::from_weights(&weights).unwrap();
        assert_eq!(max_min_ratio(&shares), Err(DistError::ZeroMinShare));
    }

    #[test]
    fn max_min_ratio_is_monotone_in_alpha() {
        let counts = reference_counts();
        let mut previous = 0.0;
        for a in [0.3, 0.5, 0.7, 1.0] {
            let ratio = max_min_ratio(&smooth(&counts, alpha(a)).unwrap()).unwrap();
            assert!(ratio > previous, "ratio {ratio} at alpha {a} not increasing");
            previous = ratio;
        }
    }

    #[test]
    fn tau_bound_matches_frozen_value() {
        let target = shares_from_counts(&reference_counts()).unwrap();
        assert_abs_diff_eq!(tau_bound(0.273, &target).unwrap(), 0.213, epsilon = 0.002);
    }

    #[test]
    fn tau_bound_edge_cases() {
        let target = shares_from_counts(&reference_counts()).unwrap();
        assert_eq!(tau_bound(0.0, &target).unwrap(), 0.0);
        assert_abs_diff_eq!(
            tau_bound(1.0, &CategoricalShares::uniform()).unwrap(),
            0.0,
            epsilon = 1e-12
        );
        assert_eq!(
            tau_bound(1.5, &target),
            Err(DistError::ErrorRateOutOfRange(1.5))
        );
        assert_eq!(
            tau_bound(-0.1, &target),
            Err(DistError::ErrorRateOutOfRange(-0.1))
        );
    }

    #[test]
    fn coverage_stats_hand_example() {
        let stats = coverage_stats([LabelSet::EMPTY, set(&[0]), set(&[0, 1])]).unwrap();
        assert_abs_diff_eq!(stats.mean_labels, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(stats.pct_nonzero, 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(stats.pct_ge2, 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn coverage_stats_all_empty_labels() {
        let stats = coverage_stats(vec![LabelSet::EMPTY; 10]).unwrap();
        assert_eq!(
            stats,
            CoverageStats {
                mean_labels: 0.0,
                pct_nonzero: 0.0,
                pct_ge2: 0.0
            }
        );
    }

    #[test]
    fn coverage_stats_recover_construction_parameters() {
        // 1000 items: 44 unlabeled, 548 single, 402 double, 6 triple
        // → mean 1.37, 95.6% labeled, 40.8% multi-label.
        let mut sets = vec![LabelSet::EMPTY; 44];
        sets.extend(vec![set(&[0]); 548]);
        sets.extend(vec![set(&[1, 2]); 402]);
        sets.extend(vec![set(&[3, 4, 5]); 6]);
        assert_eq!(sets.len(), 1000);
        let stats = coverage_stats(&sets).unwrap();
        assert_abs_diff_eq!(stats.mean_labels, 1.37, epsilon = 1e-9);
        assert_abs_diff_eq!(stats.pct_nonzero, 0.956, epsilon = 1e-9);
        assert_abs_diff_eq!(stats.pct_ge2, 0.408, epsilon = 1e-9);
    }

    #[test]
    fn coverage_stats_reject_empty_input() {
        assert_eq!(
            coverage_stats(std::iter::empty::<LabelSet>()),
            Err(DistError::EmptyInput)
        );
    }

    #[test]
    fn shares_constructor_validation() {
        assert!(CategoricalShares::new([1.0 / 21.0; CATEGORY_COUNT]).is_ok());
        let mut bad = [1.0 / 21.0; CATEGORY_COUNT];
        bad[0] = -1.0 / 21.0;
        assert!(matches!(
            CategoricalShares::new(bad),
            Err(DistError::InvalidShare { index: 0, .. })
        ));
        let short = [0.04; CATEGORY_COUNT];
        assert!(matches!(
            CategoricalShares::new(short),
            Err(DistError::NotNormalized { .. })
        ));
        assert!(matches!(
            CategoricalShares::from_weights(&[0.0; CATEGORY_COUNT]),
            Err(DistError::DegenerateWeights { .. })
        ));
    }

    #[test]
    fn alpha_constructor_validation() {
        assert!(SmoothingAlpha::new(0.3).is_ok());
        assert!(SmoothingAlpha::new(1.0).is_ok());
        for bad in [0.0, -0.5, 1.01, f64::NAN, f64::INFINITY] {
            assert!(SmoothingAlpha::new(bad).is_err(), "accepted {bad}");
        }
    }

    #[test]
    fn shares_serde_roundtrip_and_validation() {
        let shares = shares_from_counts(&reference_counts()).unwrap();
        let json = serde_json::to_string(&shares).unwrap();
        let back: CategoricalShares = serde_json::from_str(&json).unwrap();
        assert_eq!(shares, back);
        // A deserialized vector must still satisfy the simplex invariant.
        let bad = serde_json::to_string(&[0.5; CATEGORY_COUNT]).unwrap();
        assert!(serde_json::from_str::<CategoricalShares>(&bad).is_err());
    }

    #[test]
    fn name_count_share_table_shape() {
        let table = name_count_share_table(&reference_counts()).unwrap();
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines.len(), CATEGORY_COUNT);
        assert!(lines[0].starts_with("Computational Biology,95179,0.4532"));
        assert!(lines[20].starts_with("Sociobiology,12,"));
    }
}
