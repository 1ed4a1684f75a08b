//! Retrieval and recognition metrics: micro-average precision over pair
//! lists, thresholded precision/recall, threshold calibration, and the
//! four facial-recognition numbers (recall, FP per million, precision, F1).
//!
//! Matching is strict everywhere: a pair is flagged iff its distance is
//! `< T`. Pairs at exactly the threshold are not flagged.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// One query-reference comparison with ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    pub query_id: u64,
    pub ref_id: u64,
    pub distance: f64,
    pub is_true_match: bool,
}

impl PairScore {
    pub fn new(query_id: u64, ref_id: u64, distance: f64, is_true_match: bool) -> Self {
        PairScore {
            query_id,
            ref_id,
            distance,
            is_true_match,
        }
    }

    fn sort_key(&self) -> (f64, u64, u64) {
        (self.distance, self.query_id, self.ref_id)
    }
}

/// Facial-recognition report for one individual.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrReport {
    pub recall: f64,
    pub fp_per_million: f64,
    pub precision: f64,
    pub f1: f64,
}

fn sorted_pairs(pairs: &[PairScore]) -> Vec<PairScore> {
    let mut sorted = pairs.to_vec();
    // equal distances resolve by (query_id, ref_id) so mu-AP is deterministic
    sorted.sort_by(|a, b| {
        a.sort_key()
            .partial_cmp(&b.sort_key())
            .expect("pair distances must not be NaN")
    });
    sorted
}

/// Micro-average precision: area under the pairwise precision-recall curve.
///
/// Pairs are ranked by ascending distance; each true match at rank i
/// contributes precision(i) / (total true matches).
pub fn micro_average_precision(pairs: &[PairScore]) -> Result<f64> {
    let total_true = pairs.iter().filter(|p| p.is_true_match).count();
    if total_true == 0 {
        return Err(Error::NoTrueMatch);
    }
    let sorted = sorted_pairs(pairs);
    let mut cum_true = 0usize;
    let mut ap = 0.0;
    for (i, p) in sorted.iter().enumerate() {
        if p.is_true_match {
            cum_true += 1;
            ap += cum_true as f64 / (i + 1) as f64 / total_true as f64;
        }
    }
    Ok(ap)
}

/// Precision and recall of the flag set { distance < t }.
///
/// Precision is 0 when nothing is flagged; recall is 0 when there are no
/// true pairs.
pub fn precision_recall_at(pairs: &[PairScore], t: f64) -> (f64, f64) {
    let flagged = pairs.iter().filter(|p| p.distance < t);
    let (mut n_flagged, mut true_flagged) = (0usize, 0usize);
    for p in flagged {
        n_flagged += 1;
        if p.is_true_match {
            true_flagged += 1;
        }
    }
    let total_true = pairs.iter().filter(|p| p.is_true_match).count();
    let precision = if n_flagged == 0 {
        0.0
    } else {
        true_flagged as f64 / n_flagged as f64
    };
    let recall = if total_true == 0 {
        0.0
    } else {
        true_flagged as f64 / total_true as f64
    };
    (precision, recall)
}

/// Largest threshold whose precision still meets `target_precision`.
///
/// Candidate thresholds are midpoints between consecutive distinct distances
/// plus one point above the maximum, so the returned value is robust to
/// float noise on either side. Larger thresholds flag more, so the largest
/// qualifying candidate also maximizes recall.
pub fn calibrate_threshold(pairs: &[PairScore], target_precision: f64) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("calibrate_threshold needs pairs"));
    }
    let mut sorted: Vec<(f64, bool)> = pairs.iter().map(|p| (p.distance, p.is_true_match)).collect();
    sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("distances must not be NaN"));

    // one sweep: after each run of equal distances, the flag set of the
    // candidate just above that run is exactly the prefix so far
    let mut best_threshold: Option<f64> = None;
    let mut best_precision = 0.0f64;
    let mut cum_true = 0usize;
    let mut i = 0usize;
    while i < sorted.len() {
        let d = sorted[i].0;
        let mut j = i;
        while j < sorted.len() && sorted[j].0 == d {
            if sorted[j].1 {
                cum_true += 1;
            }
            j += 1;
        }
        let candidate = if j < sorted.len() {
            (d + sorted[j].0) / 2.0
        } else {
            d + 1.0
        };
        let precision = cum_true as f64 / j as f64;
        if precision >= target_precision {
            best_threshold = Some(candidate);
        }
        best_precision = best_precision.max(precision);
        i = j;
    }
    best_threshold.ok_or(Error::UnachievableTarget {
        target: target_precision,
        best: best_precision,
    })
}

/// Per-image facial-recognition counts: each entry is
/// `(is_target_image, flagged)` for one query image.
pub fn fr_metrics(query_flags: &[(bool, bool)]) -> Result<FrReport> {
    let n_target = query_flags.iter().filter(|(t, _)| *t).count();
    let n_non_target = query_flags.len() - n_target;
    if n_target == 0 {
        return Err(Error::EmptyInput("fr_metrics needs a target image"));
    }
    if n_non_target == 0 {
        return Err(Error::EmptyInput("fr_metrics needs a non-target image"));
    }
    let flagged_targets = query_flags.iter().filter(|(t, f)| *t && *f).count();
    let flagged_non_targets = query_flags.iter().filter(|(t, f)| !*t && *f).count();
    let flagged_total = flagged_targets + flagged_non_targets;

    let recall = flagged_targets as f64 / n_target as f64;
    let fp_per_million = flagged_non_targets as f64 / n_non_target as f64 * 1e6;
    let precision = if flagged_total == 0 {
        0.0
    } else {
        flagged_targets as f64 / flagged_total as f64
    };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(FrReport {
        recall,
        fp_per_million,
        precision,
        f1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn four_pairs() -> Vec<PairScore> {
        vec![
            PairScore::new(1, 1, 0.1, true),
            PairScore::new(2, 1, 0.3, false),
            PairScore::new(1, 2, 0.5, false),
            PairScore::new(2, 2, 0.9, false),
        ]
    }

    /// Independent brute-force pairwise AP: for every true pair, count how
    /// many pairs rank at or before it under the (distance, qid, rid) order.
    fn brute_force_ap(pairs: &[PairScore]) -> f64 {
        let total_true = pairs.iter().filter(|p| p.is_true_match).count();
        let mut ap = 0.0;
        for t in pairs.iter().filter(|p| p.is_true_match) {
            let mut rank = 0usize;
            let mut true_rank = 0usize;
            for p in pairs {
                if p.sort_key() <= t.sort_key() {
                    rank += 1;
                    if p.is_true_match {
                        true_rank += 1;
                    }
                }
            }
            ap += true_rank as f64 / rank as f64;
        }
        ap / total_true as f64
    }

    #[test]
    fn muap_single_positive_at_rank_one() {
        assert_eq!(micro_average_precision(&four_pairs()).unwrap(), 1.0);
    }

    #[test]
    fn muap_positive_at_rank_two() {
        let pairs = vec![
            PairScore::new(2, 1, 0.05, false),
            PairScore::new(1, 1, 0.1, true),
        ];
        assert_eq!(micro_average_precision(&pairs).unwrap(), 0.5);
    }

    #[test]
    fn muap_all_true_is_one() {
        let pairs: Vec<PairScore> = (0..5)
            .map(|i| PairScore::new(i, 0, i as f64 * 0.1, true))
            .collect();
        assert!((micro_average_precision(&pairs).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn muap_requires_a_true_pair() {
        let pairs = vec![PairScore::new(1, 1, 0.1, false)];
        assert!(matches!(
            micro_average_precision(&pairs),
            Err(Error::NoTrueMatch)
        ));
    }

    #[test]
    fn muap_matches_brute_force_oracle() {
        let mut seed = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            seed ^= seed << 13;
            seed ^= seed >> 7;
            seed ^= seed << 17;
            seed
        };
        for case in 0..40 {
            let n = 10 + (next() % 4990) as usize;
            // unique (query_id, ref_id) per the PairScore invariant
            let mut slots: Vec<(u64, u64)> = (0..50u64)
                .flat_map(|q| (0..100u64).map(move |r| (q, r)))
                .collect();
            for i in (1..slots.len()).rev() {
                slots.swap(i, (next() % (i as u64 + 1)) as usize);
            }
            let pairs: Vec<PairScore> = slots
                .into_iter()
                .take(n)
                .map(|(q, r)| {
                    PairScore::new(
                        q,
                        r,
                        // coarse grid so duplicate distances exercise ties
                        (next() % 64) as f64 / 16.0,
                        next() % 5 == 0,
                    )
                })
                .collect();
            if !pairs.iter().any(|p| p.is_true_match) {
                continue;
            }
            let fast = micro_average_precision(&pairs).unwrap();
            let brute = brute_force_ap(&pairs);
            assert!(
                (fast - brute).abs() < 1e-12,
                "case {case}: {fast} vs {brute}"
            );
        }
    }

    #[test]
    fn precision_recall_thresholds() {
        let pairs = four_pairs();
        assert_eq!(precision_recall_at(&pairs, 0.2), (1.0, 1.0));
        assert_eq!(precision_recall_at(&pairs, 0.0), (0.0, 0.0));
        assert_eq!(precision_recall_at(&pairs, f64::INFINITY), (0.25, 1.0));
    }

    #[test]
    fn calibrate_picks_largest_qualifying_midpoint() {
        let t = calibrate_threshold(&four_pairs(), 0.9).unwrap();
        assert!((t - 0.2).abs() < 1e-12);
        let (p, r) = precision_recall_at(&four_pairs(), t);
        assert!(p >= 0.9);
        assert_eq!(r, 1.0);
    }

    #[test]
    fn calibrate_single_true_pair() {
        let pairs = vec![PairScore::new(1, 1, 0.4, true)];
        let t = calibrate_threshold(&pairs, 1.0).unwrap();
        assert!(t > 0.4);
        assert_eq!(precision_recall_at(&pairs, t), (1.0, 1.0));
    }

    #[test]
    fn calibrate_unachievable_reports_best() {
        let pairs = vec![
            PairScore::new(1, 1, 0.1, false),
            PairScore::new(1, 2, 0.2, false),
        ];
        match calibrate_threshold(&pairs, 0.5) {
            Err(Error::UnachievableTarget { best, .. }) => assert_eq!(best, 0.0),
            other => panic!("expected UnachievableTarget, got {other:?}"),
        }
    }

    #[test]
    fn fr_counts() {
        // 4 targets with 3 flagged; 10 non-targets with 1 flagged
        let mut flags = vec![(true, true), (true, true), (true, true), (true, false)];
        flags.extend(std::iter::repeat((false, false)).take(9));
        flags.push((false, true));
        let r = fr_metrics(&flags).unwrap();
        assert_eq!(r.recall, 0.75);
        assert_eq!(r.fp_per_million, 100_000.0);
        assert_eq!(r.precision, 0.75);
        assert_eq!(r.f1, 0.75);
    }

    #[test]
    fn fr_nothing_flagged_is_all_zero() {
        let flags = vec![(true, false), (false, false)];
        let r = fr_metrics(&flags).unwrap();
        assert_eq!(
            (r.recall, r.fp_per_million, r.precision, r.f1),
            (0.0, 0.0, 0.0, 0.0)
        );
    }

    #[test]
    fn fr_all_flagged() {
        let mut flags = vec![(true, true)];
        flags.extend(std::iter::repeat((false, true)).take(10));
        let r = fr_metrics(&flags).unwrap();
        assert_eq!(r.recall, 1.0);
        assert!((r.precision - 1.0 / 11.0).abs() < 1e-15);
    }

    #[test]
    fn fr_fp_rate_invariant_to_duplicating_non_targets() {
        let flags = vec![(true, true), (false, true), (false, false)];
        let mut doubled = flags.clone();
        doubled.extend(flags.iter().skip(1).copied());
        let a = fr_metrics(&flags).unwrap();
        let b = fr_metrics(&doubled).unwrap();
        assert_eq!(a.fp_per_million, b.fp_per_million);
    }

    proptest! {
        #[test]
        fn recall_nondecreasing_in_threshold(
            distances in proptest::collection::vec(0.0f64..10.0, 1..60),
            trues in proptest::collection::vec(any::<bool>(), 60),
            t1 in 0.0f64..12.0,
            t2 in 0.0f64..12.0,
        ) {
            let pairs: Vec<PairScore> = distances
                .iter()
                .zip(&trues)
                .enumerate()
                .map(|(i, (&d, &m))| PairScore::new(i as u64, 0, d, m))
                .collect();
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let (_, r_lo) = precision_recall_at(&pairs, lo);
            let (_, r_hi) = precision_recall_at(&pairs, hi);
            prop_assert!(r_lo <= r_hi);
            // precision at infinity equals the base rate of true pairs
            let (p_inf, _) = precision_recall_at(&pairs, f64::INFINITY);
            let base = pairs.iter().filter(|p| p.is_true_match).count() as f64
                / pairs.len() as f64;
            prop_assert!((p_inf - base).abs() < 1e-15);
        }

        #[test]
        fn calibrated_threshold_meets_target(
            distances in proptest::collection::vec(0.01f64..5.0, 2..40),
            target in 0.05f64..1.0,
        ) {
            // first pair true so the target is achievable at the low end
            let mut pairs: Vec<PairScore> = distances
                .iter()
                .enumerate()
                .map(|(i, &d)| PairScore::new(i as u64, 0, d, false))
                .collect();
            let min_idx = pairs
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.distance.partial_cmp(&b.1.distance).unwrap())
                .map(|(i, _)| i)
                .unwrap();
            pairs[min_idx].is_true_match = true;
            if let Ok(t) = calibrate_threshold(&pairs, target) {
                let (p, _) = precision_recall_at(&pairs, t);
                prop_assert!(p >= target);
            }
        }
    }
}
