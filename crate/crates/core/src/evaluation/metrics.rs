//! Rank, precision-recall and calibration metrics over `(score, label)` pairs.
//!
//! Ties are always resolved as blocks: tied scores share an average rank for
//! AUROC and enter the precision-recall staircase together.

use serde::{Deserialize, Serialize};

use super::EvalError;

fn class_counts(labels: &[u8]) -> (usize, usize) {
    let pos = labels.iter().filter(|&&y| y == 1).count();
    (pos, labels.len() - pos)
}

fn check_lengths(scores: &[f64], labels: &[u8]) -> Result<(), EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::Length {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    Ok(())
}

/// Indices sorted by descending score, ties in input order.
fn descending(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    idx
}

/// Consecutive runs of equal scores in a sorted index list.
fn tie_blocks<'a>(order: &'a [usize], scores: &'a [f64]) -> impl Iterator<Item = &'a [usize]> + 'a {
    order.chunk_by(move |&a, &b| scores[a] == scores[b])
}

/// Probability that a positive outranks a negative, ties counted as one half.
pub fn auroc(scores: &[f64], labels: &[u8]) -> Result<f64, EvalError> {
    check_lengths(scores, labels)?;
    let (n_pos, n_neg) = class_counts(labels);
    if n_pos == 0 || n_neg == 0 {
        return Err(EvalError::Undefined("AUROC needs both classes"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Ranks are 1-based; a tie block shares the mean of its ranks.
    let mut rank_sum_pos = 0.0;
    let mut start = 0usize;
    for block in tie_blocks(&order, scores) {
        let mean_rank = start as f64 + (block.len() as f64 + 1.0) / 2.0;
        let pos = block.iter().filter(|&&i| labels[i] == 1).count();
        rank_sum_pos += mean_rank * pos as f64;
        start += block.len();
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Average precision, with tied scores entering as one block.
pub fn auprc(scores: &[f64], labels: &[u8]) -> Result<f64, EvalError> {
    check_lengths(scores, labels)?;
    let (n_pos, _) = class_counts(labels);
    if n_pos == 0 {
        return Err(EvalError::Undefined("AUPRC needs at least one positive"));
    }
    let order = descending(scores);
    let (mut tp, mut seen, mut ap) = (0usize, 0usize, 0.0);
    for block in tie_blocks(&order, scores) {
        let pos = block.iter().filter(|&&i| labels[i] == 1).count();
        tp += pos;
        seen += block.len();
        if pos > 0 {
            ap += (tp as f64 / seen as f64) * (pos as f64 / n_pos as f64);
        }
    }
    Ok(ap)
}

pub fn brier(scores: &[f64], labels: &[u8]) -> Result<f64, EvalError> {
    check_lengths(scores, labels)?;
    if scores.is_empty() {
        return Err(EvalError::Undefined("Brier score of an empty set"));
    }
    let sum: f64 = scores
        .iter()
        .zip(labels)
        .map(|(&s, &y)| (s - y as f64).powi(2))
        .sum();
    Ok(sum / scores.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    /// `None` for an empty bin.
    pub mean_score: Option<f64>,
    pub frac_pos: Option<f64>,
}

pub const DEFAULT_BINS: usize = 10;

/// Equal-width bin of a score; 1.0 falls in the top bin.
pub fn bin_index(score: f64, bins: usize) -> usize {
    ((score * bins as f64).floor().max(0.0) as usize).min(bins - 1)
}

/// Expected calibration error over equal-width bins, and the bins themselves.
pub fn ece(scores: &[f64], labels: &[u8], bins: usize) -> Result<(f64, Vec<ReliabilityBin>), EvalError> {
    check_lengths(scores, labels)?;
    if bins == 0 {
        return Err(EvalError::Undefined("ECE needs at least one bin"));
    }
    let mut sum_s = vec![0.0; bins];
    let mut sum_y = vec![0.0; bins];
    let mut count = vec![0usize; bins];
    for (&s, &y) in scores.iter().zip(labels) {
        let b = bin_index(s, bins);
        sum_s[b] += s;
        sum_y[b] += y as f64;
        count[b] += 1;
    }
    let n = scores.len() as f64;
    let mut total = 0.0;
    let table = (0..bins)
        .map(|b| {
            let (mean, frac) = if count[b] > 0 {
                let c = count[b] as f64;
                let (m, f) = (sum_s[b] / c, sum_y[b] / c);
                total += c / n * (m - f).abs();
                (Some(m), Some(f))
            } else {
                (None, None)
            };
            ReliabilityBin {
                lower: b as f64 / bins as f64,
                upper: (b + 1) as f64 / bins as f64,
                count: count[b],
                mean_score: mean,
                frac_pos: frac,
            }
        })
        .collect();
    Ok((total, table))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub specificity: f64,
    pub f1: f64,
}

/// Counts and rates with `score ≥ threshold` predicted positive.
///
/// Precision is 0 when nothing is predicted positive. Recall needs at least
/// one positive and specificity at least one negative.
pub fn confusion_at(scores: &[f64], labels: &[u8], threshold: f64) -> Result<Confusion, EvalError> {
    check_lengths(scores, labels)?;
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&s, &y) in scores.iter().zip(labels) {
        match (s >= threshold, y == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    if tp + fn_ == 0 {
        return Err(EvalError::Undefined("recall needs at least one positive"));
    }
    if tn + fp == 0 {
        return Err(EvalError::Undefined("specificity needs at least one negative"));
    }
    let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = tp as f64 / (tp + fn_) as f64;
    Ok(Confusion {
        tp,
        fp,
        tn,
        fn_,
        precision,
        recall,
        specificity: tn as f64 / (tn + fp) as f64,
        f1: f1_from_counts(tp, fp, fn_),
    })
}

fn f1_from_counts(tp: usize, fp: usize, fn_: usize) -> f64 {
    if tp == 0 {
        0.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdChoice {
    pub threshold: f64,
    pub f1: f64,
}

/// F1-maximizing threshold among 0 and the midpoints between consecutive
/// distinct scores. Equal F1 values resolve to the smallest threshold.
pub fn best_f1_threshold(scores: &[f64], labels: &[u8]) -> Result<ThresholdChoice, EvalError> {
    check_lengths(scores, labels)?;
    let (n_pos, _) = class_counts(labels);
    if n_pos == 0 {
        return Err(EvalError::Undefined("F1 threshold needs at least one positive"));
    }
    let order = descending(scores);
    let blocks: Vec<&[usize]> = tie_blocks(&order, scores).collect();
    // Candidate k predicts the first k+1 blocks positive.
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut best: Option<(usize, usize, f64)> = None;
    for (k, block) in blocks.iter().enumerate() {
        let pos = block.iter().filter(|&&i| labels[i] == 1).count();
        tp += pos;
        fp += block.len() - pos;
        let threshold = match blocks.get(k + 1) {
            Some(next) => 0.5 * (scores[block[0]] + scores[next[0]]),
            None => 0.0_f64.min(scores[block[0]]),
        };
        // F1 = 2tp / (2tp + fp + fn); compare as exact fractions.
        let num = 2 * tp;
        let den = 2 * tp + fp + (n_pos - tp);
        let better = match best {
            None => true,
            Some((bn, bd, _)) => (num as u128) * (bd as u128) >= (bn as u128) * (den as u128),
        };
        if better {
            best = Some((num, den, threshold));
        }
    }
    let (num, den, threshold) = best.expect("at least one block");
    Ok(ThresholdChoice {
        threshold,
        f1: num as f64 / den as f64,
    })
}

/// `(fpr, tpr, threshold)` points from the top-left-most cut down to all-positive.
pub fn roc_points(scores: &[f64], labels: &[u8]) -> Result<Vec<(f64, f64, f64)>, EvalError> {
    check_lengths(scores, labels)?;
    let (n_pos, n_neg) = class_counts(labels);
    if n_pos == 0 || n_neg == 0 {
        return Err(EvalError::Undefined("ROC curve needs both classes"));
    }
    let order = descending(scores);
    let mut pts = vec![(0.0, 0.0, f64::INFINITY)];
    let (mut tp, mut fp) = (0usize, 0usize);
    for block in tie_blocks(&order, scores) {
        let pos = block.iter().filter(|&&i| labels[i] == 1).count();
        tp += pos;
        fp += block.len() - pos;
        pts.push((fp as f64 / n_neg as f64, tp as f64 / n_pos as f64, scores[block[0]]));
    }
    Ok(pts)
}

/// `(recall, precision, threshold)` at each distinct-score cut.
pub fn pr_points(scores: &[f64], labels: &[u8]) -> Result<Vec<(f64, f64, f64)>, EvalError> {
    check_lengths(scores, labels)?;
    let (n_pos, _) = class_counts(labels);
    if n_pos == 0 {
        return Err(EvalError::Undefined("PR curve needs at least one positive"));
    }
    let order = descending(scores);
    let (mut tp, mut seen) = (0usize, 0usize);
    Ok(tie_blocks(&order, scores)
        .map(|block| {
            tp += block.iter().filter(|&&i| labels[i] == 1).count();
            seen += block.len();
            (tp as f64 / n_pos as f64, tp as f64 / seen as f64, scores[block[0]])
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pairwise_auroc(s: &[f64], y: &[u8]) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..s.len() {
            for j in 0..s.len() {
                if y[i] == 1 && y[j] == 0 {
                    den += 1.0;
                    if s[i] > s[j] {
                        num += 1.0;
                    } else if s[i] == s[j] {
                        num += 0.5;
                    }
                }
            }
        }
        num / den
    }

    fn tied_set(rng: &mut ChaCha8Rng, n: usize) -> (Vec<f64>, Vec<u8>) {
        let y: Vec<u8> = (0..n).map(|_| rng.gen_bool(0.3) as u8).collect();
        // Coarse rounding forces many ties.
        let s = y
            .iter()
            .map(|&l| ((rng.gen::<f64>() + 0.3 * l as f64) * 20.0).round() / 26.0)
            .collect();
        (s, y)
    }

    #[test]
    fn auroc_matches_pairwise_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let (s, y) = tied_set(&mut rng, 200);
            let a = auroc(&s, &y).unwrap();
            assert!((a - pairwise_auroc(&s, &y)).abs() < 1e-12);
        }
    }

    #[test]
    fn auroc_edge_cases() {
        assert_eq!(auroc(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(auroc(&[0.4; 6], &[0, 1, 0, 1, 1, 0]).unwrap(), 0.5);
        assert!(matches!(auroc(&[0.1, 0.2], &[1, 1]), Err(EvalError::Undefined(_))));
    }

    proptest! {
        #[test]
        fn auroc_rank_invariant(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (s, mut y) = tied_set(&mut rng, 60);
            y[0] = 1;
            y[1] = 0;
            let a = auroc(&s, &y).unwrap();
            let mapped: Vec<f64> = s.iter().map(|v| (3.0 * v).exp() + v * v * v).collect();
            prop_assert_eq!(auroc(&mapped, &y).unwrap(), a);
            let distinct: Vec<f64> = (0..60).map(|_| rng.gen::<f64>()).collect();
            let flipped: Vec<f64> = distinct.iter().map(|v| 1.0 - v).collect();
            let sum = auroc(&distinct, &y).unwrap() + auroc(&flipped, &y).unwrap();
            prop_assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    /// Walks the staircase one sample at a time, so ties are handled by
    /// crediting each tie block with its final precision.
    fn staircase_ap(s: &[f64], y: &[u8]) -> f64 {
        let mut idx: Vec<usize> = (0..s.len()).collect();
        idx.sort_by(|&a, &b| s[b].partial_cmp(&s[a]).unwrap());
        let n_pos = y.iter().filter(|&&v| v == 1).count() as f64;
        let mut ap = 0.0;
        let mut prev_recall = 0.0;
        for cut in 0..idx.len() {
            if cut + 1 < idx.len() && s[idx[cut + 1]] == s[idx[cut]] {
                continue;
            }
            let top = &idx[..=cut];
            let tp = top.iter().filter(|&&i| y[i] == 1).count() as f64;
            let recall = tp / n_pos;
            ap += (recall - prev_recall) * tp / top.len() as f64;
            prev_recall = recall;
        }
        ap
    }

    #[test]
    fn auprc_hand_case_and_staircase() {
        let s = [0.95, 0.9, 0.8, 0.7, 0.7, 0.6, 0.5, 0.4, 0.3, 0.1];
        let y = [1, 0, 1, 1, 0, 0, 1, 0, 0, 0];
        // Cuts: 1/1 at r=.25; 2/3 at r=.5; tie block → 3/5 at r=.75; 4/7 at r=1.
        let hand = 0.25 * (1.0 + 2.0 / 3.0 + 3.0 / 5.0 + 4.0 / 7.0);
        assert!((auprc(&s, &y).unwrap() - hand).abs() < 1e-15);
        assert!((staircase_ap(&s, &y) - hand).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let (s, mut y) = tied_set(&mut rng, 200);
            y[7] = 1;
            assert!((auprc(&s, &y).unwrap() - staircase_ap(&s, &y)).abs() < 1e-12);
        }
    }

    #[test]
    fn auprc_perfect_inverted_and_uninformative() {
        let s: Vec<f64> = (0..10).map(|i| i as f64 / 10.0).collect();
        let y = [0, 0, 0, 0, 0, 0, 0, 1, 1, 1];
        assert_eq!(auprc(&s, &y).unwrap(), 1.0);
        let inv: Vec<f64> = s.iter().map(|v| 1.0 - v).collect();
        let hand = (1.0 / 8.0 + 2.0 / 9.0 + 3.0 / 10.0) / 3.0;
        assert!((auprc(&inv, &y).unwrap() - hand).abs() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 200_000;
        let pi = 0.05;
        let y: Vec<u8> = (0..n).map(|_| rng.gen_bool(pi) as u8).collect();
        let s: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
        let ap = auprc(&s, &y).unwrap();
        let se = (pi * (1.0 - pi) / n as f64).sqrt();
        assert!((ap - pi).abs() < 6.0 * se + 2e-3, "{ap}");
    }

    #[test]
    fn brier_identities() {
        assert_eq!(brier(&[1.0, 0.0], &[1, 0]).unwrap(), 0.0);
        assert_eq!(brier(&[0.5; 4], &[1, 0, 0, 1]).unwrap(), 0.25);
        let y = [1, 0, 0, 0, 1, 0, 0, 0, 0, 0];
        let pi = 0.2;
        for c in [0.0, 0.2, 0.37, 0.9] {
            let b = brier(&[c; 10], &y).unwrap();
            assert!((b - ((c - pi).powi(2) + pi * (1.0 - pi))).abs() < 1e-12);
        }
    }

    #[test]
    fn ece_cases_and_recount() {
        let y = [1, 0, 0, 0, 0, 1, 0, 0, 0, 0];
        assert!(ece(&[0.2; 10], &y, 10).unwrap().0.abs() < 1e-15);
        let (e, bins) = ece(&[0.9; 5], &[0; 5], 10).unwrap();
        assert!((e - 0.9).abs() < 1e-15);
        assert_eq!(bins[9].count, 5);
        assert!(bins[0].mean_score.is_none());

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s: Vec<f64> = (0..1000).map(|_| rng.gen::<f64>().powf(0.5)).collect();
        let y: Vec<u8> = s.iter().map(|&p| rng.gen_bool(p * p) as u8).collect();
        let mut recount = 0.0;
        for b in 0..10 {
            let lo = b as f64 / 10.0;
            let members: Vec<usize> = (0..s.len())
                .filter(|&i| s[i] >= lo && (s[i] < lo + 0.1 || (b == 9 && s[i] <= 1.0)))
                .filter(|&i| ((s[i] * 10.0).floor() as usize).min(9) == b)
                .collect();
            if members.is_empty() {
                continue;
            }
            let m = members.iter().map(|&i| s[i]).sum::<f64>() / members.len() as f64;
            let f = members.iter().map(|&i| y[i] as f64).sum::<f64>() / members.len() as f64;
            recount += members.len() as f64 / s.len() as f64 * (m - f).abs();
        }
        assert!((ece(&s, &y, 10).unwrap().0 - recount).abs() < 1e-12);
    }

    #[test]
    fn confusion_hand_fixture() {
        let s = [0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2];
        let y = [1, 0, 1, 1, 0, 0, 1, 0];
        let c = confusion_at(&s, &y, 0.55).unwrap();
        assert_eq!((c.tp, c.fp, c.tn, c.fn_), (3, 1, 3, 1));
        assert_eq!(c.precision, 0.75);
        assert_eq!(c.recall, 0.75);
        assert_eq!(c.specificity, 0.75);
        assert_eq!(c.f1, 0.75);
        // Ties at the threshold are predicted positive.
        assert_eq!(confusion_at(&s, &y, 0.5).unwrap().fp, 2);
        assert_eq!(confusion_at(&s, &y, 0.0).unwrap().recall, 1.0);
        let none = confusion_at(&s, &y, 1.0 + 1e-9).unwrap();
        assert_eq!((none.specificity, none.precision), (1.0, 0.0));
        assert!(confusion_at(&s, &[0; 8], 0.5).is_err());
    }

    #[test]
    fn f1_threshold_cases() {
        let s = [0.1, 0.2, 0.3, 0.7, 0.8];
        let y = [0, 0, 0, 1, 1];
        let best = best_f1_threshold(&s, &y).unwrap();
        assert_eq!(best, ThresholdChoice { threshold: 0.5, f1: 1.0 });
        // All-positive prediction is optimal when everything ties.
        let y = [1, 0, 0, 1, 0, 0, 0];
        let best = best_f1_threshold(&[0.4; 7], &y).unwrap();
        let pi = 2.0 / 7.0;
        assert_eq!(best.threshold, 0.0);
        assert!((best.f1 - 2.0 * pi / (1.0 + pi)).abs() < 1e-15);
    }

    #[test]
    fn f1_threshold_matches_grid_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let y: Vec<u8> = (0..20).map(|_| rng.gen_bool(0.4) as u8).collect();
            let mut y = y;
            y[0] = 1;
            let s: Vec<f64> = y
                .iter()
                .map(|&l| ((rng.gen::<f64>() * 0.7 + 0.25 * l as f64) * 1000.0).round() / 1000.0)
                .collect();
            let best = best_f1_threshold(&s, &y).unwrap();
            let mut grid_best = (0.0, f64::INFINITY);
            for k in 0..=10_000 {
                let t = k as f64 * 1e-4;
                let f1 = confusion_at(&s, &y, t).map(|c| c.f1).unwrap_or(0.0);
                if f1 > grid_best.0 + 1e-12 {
                    grid_best = (f1, t);
                }
            }
            assert!((best.f1 - grid_best.0).abs() < 1e-12);
            assert!((confusion_at(&s, &y, best.threshold).unwrap().f1 - best.f1).abs() < 1e-15);
            // Both pick the lowest-threshold region among equal F1 values.
            let region = |t: f64| s.iter().map(|&v| v >= t).collect::<Vec<_>>();
            assert_eq!(region(best.threshold), region(grid_best.1));
        }
    }

    #[test]
    fn curves_end_at_full_recall() {
        let s = [0.9, 0.8, 0.8, 0.3];
        let y = [1, 0, 1, 0];
        let roc = roc_points(&s, &y).unwrap();
        assert_eq!(roc.last().unwrap().0, 1.0);
        assert_eq!(roc[1], (0.0, 0.5, 0.9));
        let pr = pr_points(&s, &y).unwrap();
        assert_eq!(pr[1], (1.0, 2.0 / 3.0, 0.8));
    }
}
