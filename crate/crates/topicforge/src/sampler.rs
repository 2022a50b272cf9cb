//! Greedy removal until a corpus matches a target topic distribution.
//!
//! Starting from every item with at least one label, each iteration scores
//! the surviving items by how much their labels sit in overrepresented
//! categories (penalizing underrepresented ones by `lambda`), removes the
//! top `k`, and recomputes shares, stopping once total variation distance
//! to the target falls to `tau` — or when the size floor or iteration cap
//! is hit. The loop is deterministic: scores tie-break on input position,
//! and shares are always recomputed from maintained integer counts rather
//! than updated in floating point.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::QARecord;
use crate::distmatch::{
    counts_from_labelsets, shares_from_counts, smooth, tvd, CategoricalShares, CountVector,
    DistError, SmoothingAlpha,
};
use crate::taxonomy::{LabelSet, CATEGORY_COUNT};

#[derive(Debug, Error, PartialEq)]
pub enum SamplerError {
    #[error("no items with nonempty label sets")]
    NoValidItems,
    #[error("tau must be positive and finite, got {0}")]
    InvalidTau(f64),
    #[error("lambda must be nonnegative and finite, got {0}")]
    InvalidLambda(f64),
    #[error("k must be at least 1")]
    InvalidK,
    #[error(transparent)]
    Dist(#[from] DistError),
}

/// How equal scores are ordered. Only one policy exists today; it is an
/// enum so traces and manifests record the policy explicitly.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    /// Prefer removing the item with the lower input position.
    #[default]
    ByInputIndex,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Total-variation-distance threshold; the loop stops at or below it.
    pub tau: f64,
    /// Weight on the underrepresentation penalty. 1 treats both directions
    /// symmetrically; 0 ignores deficits entirely.
    pub lambda: f64,
    /// Removals per iteration.
    pub k: usize,
    /// Never shrink the kept set below this many items.
    pub n_min: usize,
    pub max_iters: usize,
    pub tie_break: TieBreak,
    /// Recount counts from scratch every iteration and compare with the
    /// maintained ones. Costs one pass per iteration; meant for tests.
    #[serde(default)]
    pub audit_counts: bool,
}

impl SamplerConfig {
    /// Defaults scaled to a corpus of `valid` labeled items: `k` removes
    /// 0.1% per iteration (at least 1), the floor keeps 10% of items, and
    /// the iteration cap equals the corpus size so the loop always halts.
    pub fn for_size(valid: usize, tau: f64) -> Self {
        Self {
            tau,
            lambda: 1.0,
            k: (valid / 1000).max(1),
            n_min: valid.div_ceil(10),
            max_iters: valid,
            tie_break: TieBreak::ByInputIndex,
            audit_counts: false,
        }
    }

    pub fn validate(&self) -> Result<(), SamplerError> {
        if !self.tau.is_finite() || self.tau <= 0.0 {
            return Err(SamplerError::InvalidTau(self.tau));
        }
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(SamplerError::InvalidLambda(self.lambda));
        }
        if self.k == 0 {
            return Err(SamplerError::InvalidK);
        }
        Ok(())
    }
}

/// Why the removal loop stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// Reached `tau`.
    Converged,
    /// Hit the `n_min` size floor with the distance still above `tau`.
    SizeFloor,
    /// Hit `max_iters`.
    IterationCap,
}

/// One removal iteration, recorded before the removal takes effect.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// 1-based iteration number.
    pub iteration: usize,
    /// Distance to the target entering this iteration.
    pub tvd_before: f64,
    pub removed_count: usize,
    /// How many of the removed items scored below zero — nonzero means the
    /// loop is now removing items that hurt the match, which is worth
    /// noticing in a trace.
    pub negative_scores_removed: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleResult {
    /// Input positions of surviving items, ascending.
    pub kept_indices: Vec<usize>,
    pub final_shares: CategoricalShares,
    pub final_tvd: f64,
    /// `|kept| / |valid|`, where valid items are those with nonempty labels.
    pub yield_fraction: f64,
    pub trace: Vec<IterationRecord>,
    pub stop_reason: StopReason,
}

/// A sampling run resolved back to record identifiers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    /// Ids of kept records, in input order.
    pub kept_ids: Vec<String>,
    pub sample: SampleResult,
}

/// Score one item against the current and target shares.
///
/// Categories where `current > target` (strictly) contribute their excess;
/// all others contribute `-lambda` times their deficit, so a category
/// exactly on target contributes zero either way. Items whose labels sit
/// entirely in overrepresented categories therefore score at least as high
/// as items sitting entirely in underrepresented ones, for any
/// `lambda ≥ 0`.
///
/// The caller must exclude unlabeled items; an empty label set has no
/// meaningful score.
pub fn score_item(
    labels: LabelSet,
    current: &CategoricalShares,
    target: &CategoricalShares,
    lambda: f64,
) -> f64 {
    debug_assert!(!labels.is_empty(), "unlabeled items cannot be scored");
    labels
        .iter()
        .map(|j| {
            let diff = current.get(j) - target.get(j);
            if diff > 0.0 {
                diff
            } else {
                lambda * diff
            }
        })
        .sum()
}

/// Run the removal loop over label sets indexed by input position.
///
/// Items with empty label sets are excluded up front and never appear in
/// the result. Each iteration removes `min(k, |S| - max(n_min, 1))` items,
/// so the kept set never drops below the floor and never empties even with
/// `n_min = 0`.
pub fn greedy_match(
    labelsets: &[LabelSet],
    target: &CategoricalShares,
    config: &SamplerConfig,
) -> Result<SampleResult, SamplerError> {
    config.validate()?;
    let TieBreak::ByInputIndex = config.tie_break;

    let mut alive: Vec<usize> = (0..labelsets.len())
        .filter(|&i| !labelsets[i].is_empty())
        .collect();
    let valid_count = alive.len();
    if valid_count == 0 {
        return Err(SamplerError::NoValidItems);
    }
    let floor = config.n_min.max(1);

    let mut counts = counts_from_labelsets(alive.iter().map(|&i| labelsets[i]));
    let mut dead = vec![false; labelsets.len()];
    let mut trace = Vec::new();
    let mut scored: Vec<(f64, usize)> = Vec::with_capacity(valid_count);

    let (final_shares, final_tvd, stop_reason) = loop {
        let shares =
            shares_from_counts(&counts).expect("kept items are labeled, so counts stay positive");
        let distance = tvd(&shares, target);
        if distance <= config.tau {
            break (shares, distance, StopReason::Converged);
        }
        if alive.len() <= config.n_min {
            break (shares, distance, StopReason::SizeFloor);
        }
        if trace.len() >= config.max_iters {
            break (shares, distance, StopReason::IterationCap);
        }
        let removals = config.k.min(alive.len() - floor);
        if removals == 0 {
            break (shares, distance, StopReason::SizeFloor);
        }

        // Per-category weights make each item's score a plain sum over its
        // labels, so the scoring pass is O(|S|) and allocation-free.
        let mut weights = [0.0f64; CATEGORY_COUNT];
        for (j, weight) in weights.iter_mut().enumerate() {
            let diff = shares.get(j) - target.get(j);
            *weight = if diff > 0.0 { diff } else { config.lambda * diff };
        }
        scored.clear();
        scored.extend(
            alive
                .iter()
                .map(|&i| (labelsets[i].iter().map(|j| weights[j]).sum::<f64>(), i)),
        );
        // Highest score first, then lowest input position: a strict total
        // order, so the selected set is unique and the run deterministic.
        let rank = |a: &(f64, usize), b: &(f64, usize)| {
            b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1))
        };
        scored.select_nth_unstable_by(removals - 1, rank);

        let mut negative_scores_removed = 0;
        for &(score, index) in &scored[..removals] {
            if score < 0.0 {
                negative_scores_removed += 1;
            }
            counts.remove_labels(labelsets[index]);
            dead[index] = true;
        }
        alive.retain(|&i| !dead[i]);
        trace.push(IterationRecord {
            iteration: trace.len() + 1,
            tvd_before: distance,
            removed_count: removals,
            negative_scores_removed,
        });
        if config.audit_counts {
            let recount = counts_from_labelsets(alive.iter().map(|&i| labelsets[i]));
            assert_eq!(recount, counts, "maintained counts diverged from recount");
        }
    };

    debug_assert_eq!(
        counts_from_labelsets(alive.iter().map(|&i| labelsets[i])),
        counts
    );
    Ok(SampleResult {
        yield_fraction: alive.len() as f64 / valid_count as f64,
        kept_indices: alive,
        final_shares,
        final_tvd,
        trace,
        stop_reason,
    })
}

/// Smooth `target_counts` by `alpha`, match `records` against the result,
/// and resolve kept items back to record ids. Records without labels (or
/// with empty label sets) are excluded from the run.
pub fn run_calibration(
    records: &[QARecord],
    target_counts: &CountVector,
    alpha: SmoothingAlpha,
    config: &SamplerConfig,
) -> Result<CalibrationResult, SamplerError> {
    let target = smooth(target_counts, alpha)?;
    let labelsets: Vec<LabelSet> = records
        .iter()
        .map(|record| record.labels.unwrap_or(LabelSet::EMPTY))
        .collect();
    let sample = greedy_match(&labelsets, &target, config)?;
    let kept_ids = sample
        .kept_indices
        .iter()
        .map(|&i| records[i].id.clone())
        .collect();
    Ok(CalibrationResult { kept_ids, sample })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::AnswerFormat;
    use approx::assert_abs_diff_eq;
    use std::collections::BTreeMap;

    fn set(indices: &[usize]) -> LabelSet {
        LabelSet::from_indices(indices.iter().copied())
    }

    fn shares(weights: &[f64]) -> CategoricalShares {
        let mut padded = [0.0; CATEGORY_COUNT];
        padded[..weights.len()].copy_from_slice(weights);
        CategoricalShares::from_weights(&padded).unwrap()
    }

    fn config(tau: f64, k: usize, n_min: usize) -> SamplerConfig {
        SamplerConfig {
            tau,
            lambda: 1.0,
            k,
            n_min,
            max_iters: 10_000,
            tie_break: TieBreak::ByInputIndex,
            audit_counts: true,
        }
    }

    #[test]
    fn score_item_hand_case() {
        let current = shares(&[0.6, 0.3, 0.1]);
        let target = shares(&[0.4, 0.4, 0.2]);
        let score = score_item(set(&[0, 1]), &current, &target, 1.0);
        assert_abs_diff_eq!(score, 0.1, epsilon = 1e-12);
    }

    #[test]
    fn score_item_signs() {
        let current = shares(&[0.6, 0.3, 0.1]);
        let target = shares(&[0.4, 0.4, 0.2]);
        // Entirely overrepresented → sum of excesses.
        assert_abs_diff_eq!(
            score_item(set(&[0]), &current, &target, 1.0),
            0.2,
            epsilon = 1e-12
        );
        // Entirely underrepresented → minus the deficits.
        assert_abs_diff_eq!(
            score_item(set(&[1, 2]), &current, &target, 1.0),
            -0.2,
            epsilon = 1e-12
        );
        // lambda = 0 ignores deficits entirely.
        assert_eq!(score_item(set(&[1, 2]), &current, &target, 0.0), 0.0);
        // A category exactly on target contributes nothing.
        let on_target = shares(&[0.5, 0.3, 0.2]);
        let same = shares(&[0.5, 0.25, 0.25]);
        assert_abs_diff_eq!(
            score_item(set(&[0]), &on_target, &same, 7.0),
            0.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn worked_six_item_example() {
        // Four {A} and two {B} against a 50/50 target: the loop should
        // remove exactly two {A} items (lowest positions first) and land
        // on a perfect match.
        let labelsets = vec![set(&[0]), set(&[0]), set(&[0]), set(&[0]), set(&[1]), set(&[1])];
        let target = shares(&[0.5, 0.5]);
        let result = greedy_match(&labelsets, &target, &config(0.01, 1, 0)).unwrap();
        assert_eq!(result.kept_indices, [2, 3, 4, 5]);
        assert_eq!(result.stop_reason, StopReason::Converged);
        assert_abs_diff_eq!(result.final_tvd, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(result.final_shares.get(0), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(result.yield_fraction, 4.0 / 6.0, epsilon = 1e-12);
        assert_eq!(result.trace.len(), 2);
        assert_abs_diff_eq!(result.trace[0].tvd_before, 1.0 / 6.0, epsilon = 1e-12);
        assert_abs_diff_eq!(result.trace[1].tvd_before, 0.1, epsilon = 1e-12);
        assert_eq!(result.trace[1].iteration, 2);
    }

    #[test]
    fn worked_example_matches_exhaustive_minimum() {
        // Brute force over all 2^6 kept-subsets: the fewest removals that
        // reach tvd ≤ 0.01 is two, which is what the greedy run spends.
        let labelsets = vec![set(&[0]), set(&[0]), set(&[0]), set(&[0]), set(&[1]), set(&[1])];
        let target = shares(&[0.5, 0.5]);
        let mut best_removals = usize::MAX;
        for mask in 1u32..64 {
            let kept: Vec<LabelSet> = (0..6)
                .filter(|&i| mask & (1 << i) != 0)
                .map(|i| labelsets[i])
                .collect();
            let counts = counts_from_labelsets(&kept);
            let sample_shares = shares_from_counts(&counts).unwrap();
            if tvd(&sample_shares, &target) <= 0.01 {
                best_removals = best_removals.min(6 - kept.len());
            }
        }
        assert_eq!(best_removals, 2);
        let result = greedy_match(&labelsets, &target, &config(0.01, 1, 0)).unwrap();
        assert_eq!(6 - result.kept_indices.len(), best_removals);
    }

    #[test]
    fn input_already_within_tau_runs_zero_iterations() {
        let labelsets = vec![set(&[0]), set(&[1])];
        let target = shares(&[0.5, 0.5]);
        let result = greedy_match(&labelsets, &target, &config(0.05, 3, 0)).unwrap();
        assert_eq!(result.kept_indices, [0, 1]);
        assert_eq!(result.yield_fraction, 1.0);
        assert!(result.trace.is_empty());
        assert_eq!(result.stop_reason, StopReason::Converged);
    }

    #[test]
    fn identical_labelsets_stop_at_the_floor_with_tvd_unchanged() {
        let labelsets = vec![set(&[0, 1]); 5];
        let target = shares(&[0.3, 0.7]);
        let result = greedy_match(&labelsets, &target, &config(0.01, 1, 2)).unwrap();
        assert_eq!(result.stop_reason, StopReason::SizeFloor);
        assert_eq!(result.kept_indices.len(), 2);
        let initial = result.trace[0].tvd_before;
        assert_abs_diff_eq!(result.final_tvd, initial, epsilon = 1e-12);
        for step in &result.trace {
            assert_abs_diff_eq!(step.tvd_before, initial, epsilon = 1e-12);
        }
    }

    #[test]
    fn negative_score_removals_are_logged() {
        // With identical items and lambda = 2, every score is negative,
        // yet the loop still removes top-k and records it did so.
        let labelsets = vec![set(&[0, 1]); 5];
        let target = shares(&[0.3, 0.7]);
        let mut cfg = config(0.01, 1, 2);
        cfg.lambda = 2.0;
        let result = greedy_match(&labelsets, &target, &cfg).unwrap();
        assert_eq!(result.trace.len(), 3);
        for step in &result.trace {
            assert_eq!(step.removed_count, 1);
            assert_eq!(step.negative_scores_removed, 1);
        }
    }

    #[test]
    fn unlabeled_items_never_survive() {
        let labelsets = vec![LabelSet::EMPTY, set(&[0]), LabelSet::EMPTY, set(&[1])];
        let target = shares(&[0.5, 0.5]);
        let result = greedy_match(&labelsets, &target, &config(0.05, 1, 0)).unwrap();
        assert_eq!(result.kept_indices, [1, 3]);
        assert_eq!(result.yield_fraction, 1.0);

        let all_empty = vec![LabelSet::EMPTY; 3];
        assert_eq!(
            greedy_match(&all_empty, &target, &config(0.05, 1, 0)),
            Err(SamplerError::NoValidItems)
        );
    }

    #[test]
    fn tie_break_prefers_lower_input_positions() {
        // Six interchangeable {A} items alongside two {B}: removals must
        // peel {A}s off in input order.
        let labelsets = vec![
            set(&[0]), set(&[0]), set(&[0]), set(&[0]), set(&[0]), set(&[0]),
            set(&[1]), set(&[1]),
        ];
        let target = shares(&[0.4, 0.6]);
        let result = greedy_match(&labelsets, &target, &config(0.07, 1, 0)).unwrap();
        // 1×{A} against 2×{B} is the first ratio within tau, so exactly
        // five {A} items go — and they must go in input order.
        let removed: Vec<usize> = (0..8).filter(|i| !result.kept_indices.contains(i)).collect();
        assert_eq!(result.stop_reason, StopReason::Converged);
        assert!(!removed.is_empty());
        assert!(removed.iter().all(|&i| i < 6), "removed {removed:?}");
        let max_removed = removed.iter().max().unwrap();
        assert_eq!(removed.len(), max_removed + 1, "not a prefix: {removed:?}");
    }

    #[test]
    fn runs_are_deterministic() {
        let labelsets: Vec<LabelSet> = (0..500)
            .map(|i| match i % 7 {
                0 | 1 | 2 => set(&[0]),
                3 | 4 => set(&[1, 2]),
                5 => set(&[2]),
                _ => set(&[3]),
            })
            .collect();
        let target = shares(&[0.2, 0.3, 0.3, 0.2]);
        let cfg = config(0.03, 7, 50);
        let first = greedy_match(&labelsets, &target, &cfg).unwrap();
        let second = greedy_match(&labelsets, &target, &cfg).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn iteration_count_respects_the_termination_bound() {
        let labelsets: Vec<LabelSet> = (0..1000)
            .map(|i| if i % 10 == 0 { set(&[1]) } else { set(&[0]) })
            .collect();
        let target = shares(&[0.5, 0.5]);
        let cfg = config(0.02, 13, 100);
        let result = greedy_match(&labelsets, &target, &cfg).unwrap();
        let bound = (1000 - cfg.n_min).div_ceil(cfg.k).min(cfg.max_iters);
        assert!(result.trace.len() <= bound);
    }

    #[test]
    fn iteration_cap_stops_the_loop() {
        let labelsets: Vec<LabelSet> = (0..100)
            .map(|i| if i % 10 == 0 { set(&[1]) } else { set(&[0]) })
            .collect();
        let target = shares(&[0.5, 0.5]);
        let mut cfg = config(0.001, 1, 0);
        cfg.max_iters = 3;
        let result = greedy_match(&labelsets, &target, &cfg).unwrap();
        assert_eq!(result.stop_reason, StopReason::IterationCap);
        assert_eq!(result.trace.len(), 3);
        assert_eq!(result.kept_indices.len(), 97);
    }

    #[test]
    fn config_validation() {
        let target = shares(&[1.0]);
        let labelsets = vec![set(&[0])];
        for (cfg, expected) in [
            (config(0.0, 1, 0), SamplerError::InvalidTau(0.0)),
            (config(-0.1, 1, 0), SamplerError::InvalidTau(-0.1)),
            (config(0.1, 0, 0), SamplerError::InvalidK),
        ] {
            assert_eq!(greedy_match(&labelsets, &target, &cfg), Err(expected));
        }
        let mut cfg = config(0.1, 1, 0);
        cfg.lambda = -1.0;
        assert_eq!(
            greedy_match(&labelsets, &target, &cfg),
            Err(SamplerError::InvalidLambda(-1.0))
        );
    }

    #[test]
    fn for_size_defaults_scale_with_the_corpus() {
        let cfg = SamplerConfig::for_size(345_000, 0.21);
        assert_eq!(cfg.k, 345);
        assert_eq!(cfg.n_min, 34_500);
        assert_eq!(cfg.max_iters, 345_000);
        assert_eq!(cfg.lambda, 1.0);
        let tiny = SamplerConfig::for_size(12, 0.1);
        assert_eq!(tiny.k, 1);
        assert_eq!(tiny.n_min, 2);
    }

    fn record(id: &str, labels: Option<LabelSet>) -> QARecord {
        QARecord {
            id: id.to_string(),
            source: "synthetic".to_string(),
            doc_id: "d".to_string(),
            question: "Q?".to_string(),
            choices: None,
            answer: "yes".to_string(),
            answer_format: AnswerFormat::Yesno,
            labels,
            relevance_score: None,
            grade_score: None,
            extra: BTreeMap::new(),
        }
    }

    #[test]
    fn calibration_against_own_counts_removes_nothing() {
        let records: Vec<QARecord> = (0..50)
            .map(|i| {
                let labels = if i % 2 == 0 { set(&[0]) } else { set(&[1, 2]) };
                record(&format!("r{i}"), Some(labels))
            })
            .collect();
        let own_counts =
            counts_from_labelsets(records.iter().map(|r| r.labels.unwrap()));
        let result = run_calibration(
            &records,
            &own_counts,
            SmoothingAlpha::IDENTITY,
            &config(0.01, 1, 0),
        )
        .unwrap();
        assert_eq!(result.kept_ids.len(), 50);
        assert!(result.sample.trace.is_empty());
    }

    #[test]
    fn skewed_corpus_converges_to_a_uniform_target() {
        // 9000 {A} + 1000 {B} against a uniform two-category target.
        let records: Vec<QARecord> = (0..10_000)
            .map(|i| {
                let labels = if i % 10 == 9 { set(&[1]) } else { set(&[0]) };
                record(&format!("r{i}"), Some(labels))
            })
            .collect();
        let target_counts = {
            let mut raw = [0u64; CATEGORY_COUNT];
            raw[0] = 1;
            raw[1] = 1;
            CountVector::new(raw)
        };
        let mut cfg = SamplerConfig::for_size(10_000, 0.02);
        cfg.audit_counts = true;
        let result =
            run_calibration(&records, &target_counts, SmoothingAlpha::IDENTITY, &cfg).unwrap();
        assert_eq!(result.sample.stop_reason, StopReason::Converged);
        assert!(result.sample.final_tvd <= 0.02);
        assert_eq!(result.kept_ids.len(), result.sample.kept_indices.len());

        // The same corpus with a floor at 9,900 items cannot get there.
        cfg.n_min = 9_900;
        let floored =
            run_calibration(&records, &target_counts, SmoothingAlpha::IDENTITY, &cfg).unwrap();
        assert_eq!(floored.sample.stop_reason, StopReason::SizeFloor);
        assert!(floored.sample.final_tvd > 0.02);
        assert_eq!(floored.sample.kept_indices.len(), 9_900);
    }

    #[test]
    fn results_serialize_for_trace_files() {
        let labelsets = vec![set(&[0]), set(&[0]), set(&[1])];
        let target = shares(&[0.5, 0.5]);
        let result = greedy_match(&labelsets, &target, &config(0.01, 1, 0)).unwrap();
        let json = serde_json::to_string(&result).unwrap();
        let back: SampleResult = serde_json::from_str(&json).unwrap();
        assert_eq!(back, result);
        for step in &result.trace {
            let line = serde_json::to_string(step).unwrap();
            assert!(line.contains("\"iteration\""));
            assert!(line.contains("\"tvd_before\""));
        }
    }
}
