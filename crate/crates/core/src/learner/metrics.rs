use serde::{Deserialize, Serialize};

/// Threshold metrics plus rank-based ROC-AUC. Precision, recall and F1 are 0
/// when their denominators vanish; `roc_auc` is `None` when a class is absent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub roc_auc: Option<f64>,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

/// Mann–Whitney AUC: average ranks, ties share credit.
pub fn roc_auc(scores: &[(f64, bool)]) -> Option<f64> {
    let n_pos = scores.iter().filter(|(_, l)| *l).count();
    let n_neg = scores.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].0.total_cmp(&scores[b].0));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]].0 == scores[order[i]].0 {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their mean
        let avg_rank = (i + j + 2) as f64 / 2.0;
        for &k in &order[i..=j] {
            if scores[k].1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos * n_neg) as f64)
}

/// `score >= threshold` counts as a positive prediction.
pub fn classification_metrics(scores: &[(f64, bool)], threshold: f64) -> EvalReport {
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for &(s, label) in scores {
        match (s >= threshold, label) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    EvalReport {
        precision,
        recall,
        f1,
        roc_auc: roc_auc(scores),
        tp,
        fp,
        tn,
        fn_,
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    /// Counts positive–negative pairs ordered correctly, ties worth one half.
    fn pairwise_auc(scores: &[(f64, bool)]) -> f64 {
        let mut credit = 0.0;
        let mut pairs = 0.0;
        for &(sp, lp) in scores {
            for &(sn, ln) in scores {
                if lp && !ln {
                    pairs += 1.0;
                    credit += if sp > sn { 1.0 } else if sp == sn { 0.5 } else { 0.0 };
                }
            }
        }
        credit / pairs
    }

    #[test]
    fn perfect_scores() {
        let r = classification_metrics(&[(1.0, true), (0.0, false), (1.0, true)], 0.5);
        assert_eq!((r.precision, r.recall, r.f1, r.roc_auc), (1.0, 1.0, 1.0, Some(1.0)));
        assert_eq!(r.tp + r.fp + r.tn + r.fn_, 3);
    }

    #[test]
    fn constant_scores_give_half_auc() {
        let s = [(0.3, true), (0.3, false), (0.3, false), (0.3, true)];
        assert_eq!(roc_auc(&s), Some(0.5));
    }

    #[test]
    fn four_point_example() {
        let s = [(0.9, true), (0.8, false), (0.7, true), (0.3, false)];
        assert_eq!(pairwise_auc(&s), 0.75);
        assert_eq!(roc_auc(&s), Some(0.75));
    }

    #[test]
    fn single_class_auc_undefined() {
        assert_eq!(roc_auc(&[(0.1, true), (0.9, true)]), None);
    }

    #[test]
    fn no_predicted_positives() {
        let r = classification_metrics(&[(0.1, true), (0.2, false)], 0.5);
        assert_eq!((r.precision, r.recall, r.f1), (0.0, 0.0, 0.0));
    }

    fn scored() -> impl Strategy<Value = Vec<(f64, bool)>> {
        prop::collection::vec(((0u8..20).prop_map(|v| v as f64 / 19.0), any::<bool>()), 2..40)
    }

    proptest! {
        #[test]
        fn rank_auc_matches_pairwise(s in scored()) {
            let expected = s.iter().any(|x| x.1) && s.iter().any(|x| !x.1);
            match roc_auc(&s) {
                Some(a) => prop_assert!((a - pairwise_auc(&s)).abs() < 1e-12),
                None => prop_assert!(!expected),
            }
        }

        #[test]
        fn auc_invariant_under_monotone_transform(s in scored()) {
            let t: Vec<(f64, bool)> = s.iter().map(|&(x, l)| ((3.0 * x).exp() - 7.0, l)).collect();
            match (roc_auc(&s), roc_auc(&t)) {
                (Some(a), Some(b)) => prop_assert!((a - b).abs() < 1e-12),
                (a, b) => prop_assert_eq!(a, b),
            }
        }

        #[test]
        fn f1_is_harmonic_mean(s in scored(), thr in 0.0f64..1.0) {
            let r = classification_metrics(&s, thr);
            if r.precision + r.recall > 0.0 {
                let h = 2.0 * r.precision * r.recall / (r.precision + r.recall);
                prop_assert!((r.f1 - h).abs() < 1e-12);
            }
            prop_assert_eq!(r.tp + r.fp + r.tn + r.fn_, s.len());
        }
    }
}
