use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::math::{argmax, ranked};

/// One-vs-rest figures for a class that occurs in the ground truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: usize,
    pub support: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub average_precision: f64,
    /// Absent when every item belongs to this class.
    pub auc: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub n: usize,
    pub k: usize,
    pub accuracy: f64,
    pub top_k_accuracy: f64,
    pub mean_average_precision: f64,
    /// Macro AUC over classes that have both positives and negatives;
    /// absent if there are none.
    pub auc: Option<f64>,
    pub balanced_accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub per_class: Vec<ClassMetrics>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Average precision of `scores` against binary `positive`: the precision at
/// each positive's rank, averaged. Descending scores, original order among
/// ties. `None` without positives.
pub fn average_precision(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, i) in ranked(scores).into_iter().enumerate() {
        if positive[i] {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    (hits > 0).then(|| sum / hits as f64)
}

/// ROC AUC as the Mann-Whitney statistic, ties counting one half. Uses
/// midranks so it runs in `O(n log n)`. `None` unless both classes occur.
pub fn roc_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // twice the rank sum keeps midranks integral
    let mut rank_sum2: u64 = 0;
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && scores[idx[end]] == scores[idx[start]] {
            end += 1;
        }
        let twice_mid = (start + 1 + end) as u64;
        let pos_in_block = idx[start..end].iter().filter(|&&i| positive[i]).count() as u64;
        rank_sum2 += twice_mid * pos_in_block;
        start = end;
    }
    let n_pos = n_pos as u64;
    let u2 = rank_sum2 - n_pos * (n_pos + 1);
    Some(u2 as f64 / (2 * n_pos * n_neg as u64) as f64)
}

/// Multi-class report from per-class scores. Macro averages run over the
/// classes present in `y_true`.
pub fn classification_report(
    y_true: &[usize],
    y_score: &[Vec<f64>],
    k: usize,
) -> Result<ClassificationReport, MetricsError> {
    let n = y_true.len();
    if n == 0 {
        return Err(MetricsError::Empty);
    }
    if y_score.len() != n {
        return Err(MetricsError::Shape(format!("{n} labels but {} score rows", y_score.len())));
    }
    let classes = y_score[0].len();
    if classes == 0 || y_score.iter().any(|r| r.len() != classes) {
        return Err(MetricsError::Shape("score rows must share one non-zero width".into()));
    }
    if let Some(&bad) = y_true.iter().find(|&&y| y >= classes) {
        return Err(MetricsError::Shape(format!("label {bad} outside {classes} classes")));
    }
    if y_score.iter().flatten().any(|s| !s.is_finite()) {
        return Err(MetricsError::NonFinite);
    }
    if k == 0 {
        return Err(MetricsError::Shape("k must be positive".into()));
    }

    let pred: Vec<usize> = y_score.iter().map(|r| argmax(r)).collect();
    let correct = pred.iter().zip(y_true).filter(|(p, y)| p == y).count();
    let in_top_k = y_score
        .iter()
        .zip(y_true)
        .filter(|(row, &y)| ranked(row).into_iter().take(k).any(|c| c == y))
        .count();

    let mut per_class = Vec::new();
    for c in 0..classes {
        let support = y_true.iter().filter(|&&y| y == c).count();
        if support == 0 {
            continue;
        }
        let tp = pred.iter().zip(y_true).filter(|(&p, &y)| p == c && y == c).count();
        let predicted = pred.iter().filter(|&&p| p == c).count();
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, support);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        let scores: Vec<f64> = y_score.iter().map(|r| r[c]).collect();
        let positive: Vec<bool> = y_true.iter().map(|&y| y == c).collect();
        per_class.push(ClassMetrics {
            class: c,
            support,
            precision,
            recall,
            f1,
            average_precision: average_precision(&scores, &positive).expect("support > 0"),
            auc: roc_auc(&scores, &positive),
        });
    }

    let m = per_class.len() as f64;
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / m;
    let aucs: Vec<f64> = per_class.iter().filter_map(|c| c.auc).collect();
    Ok(ClassificationReport {
        n,
        k,
        accuracy: ratio(correct, n),
        top_k_accuracy: ratio(in_top_k, n),
        mean_average_precision: mean(|c| c.average_precision),
        auc: (!aucs.is_empty()).then(|| aucs.iter().sum::<f64>() / aucs.len() as f64),
        balanced_accuracy: mean(|c| c.recall),
        macro_precision: mean(|c| c.precision),
        macro_recall: mean(|c| c.recall),
        macro_f1: mean(|c| c.f1),
        per_class,
    })
}

/// Scores that put all mass on one class per row, for hard predictions.
pub fn one_hot_scores(pred: &[usize], classes: usize) -> Vec<Vec<f64>> {
    pred.iter()
        .map(|&p| (0..classes).map(|c| if c == p { 1.0 } else { 0.0 }).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let y = [0, 1, 2, 1];
        let r = classification_report(&y, &one_hot_scores(&y, 3), 5).unwrap();
        for v in [
            r.accuracy,
            r.top_k_accuracy,
            r.mean_average_precision,
            r.auc.unwrap(),
            r.balanced_accuracy,
            r.macro_precision,
            r.macro_recall,
            r.macro_f1,
        ] {
            assert_eq!(v, 1.0);
        }
    }

    #[test]
    fn hand_confusion_matrix() {
        let r = classification_report(&[0, 0, 1], &one_hot_scores(&[0, 0, 0], 2), 1).unwrap();
        assert!((r.accuracy - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.balanced_accuracy, 0.5);
        assert!((r.macro_f1 - 0.4).abs() < 1e-15);
    }

    #[test]
    fn hand_ranking_values() {
        let s = [0.9, 0.8, 0.3];
        let p = [true, false, true];
        assert_eq!(roc_auc(&s, &p), Some(0.5));
        assert!((average_precision(&s, &p).unwrap() - 5.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn single_class_auc_is_absent() {
        let r = classification_report(&[1, 1], &[vec![0.2, 0.8], vec![0.6, 0.4]], 1).unwrap();
        assert_eq!(r.auc, None);
        assert_eq!(r.per_class.len(), 1);
    }

    #[test]
    fn shape_errors() {
        assert!(classification_report(&[0], &[], 1).is_err());
        assert!(classification_report(&[2], &[vec![0.0, 1.0]], 1).is_err());
        assert!(classification_report(&[], &[], 1).is_err());
    }
}
