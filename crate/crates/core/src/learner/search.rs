use std::cmp::Ordering as Cmp;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::metrics::classification_metrics;
use super::{train_forest, FeaturesPerSplit, Forest, HyperParams, LearnError, Samples};
use crate::ingest::stratified_folds;

/// Fold-averaged metrics. `roc_auc` averages only the folds where it is
/// defined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub roc_auc: Option<f64>,
    pub folds: usize,
}

/// Stratified k-fold cross-validation. Fold `i` trains with seed `seed + i`.
pub fn cross_validate(
    samples: &Samples,
    hyper: &HyperParams,
    k: usize,
    seed: u64,
) -> Result<CvScores, LearnError> {
    let folds = stratified_folds(&samples.labels, k, seed)?;
    let mut in_fold = vec![usize::MAX; samples.len()];
    for (f, members) in folds.iter().enumerate() {
        for &i in members {
            in_fold[i] = f;
        }
    }
    let (mut p, mut r, mut f1) = (0.0, 0.0, 0.0);
    let mut aucs = Vec::new();
    for (f, held_out) in folds.iter().enumerate() {
        let train_idx: Vec<usize> = (0..samples.len()).filter(|&i| in_fold[i] != f).collect();
        let forest = train_forest(&samples.subset(&train_idx), hyper, seed.wrapping_add(f as u64))?;
        let scores: Vec<(f64, bool)> = held_out
            .iter()
            .map(|&i| (forest.predict_row(&samples.rows[i]), samples.labels[i]))
            .collect();
        let rep = classification_metrics(&scores, 0.5);
        p += rep.precision;
        r += rep.recall;
        f1 += rep.f1;
        aucs.extend(rep.roc_auc);
    }
    let k = folds.len() as f64;
    Ok(CvScores {
        precision: p / k,
        recall: r / k,
        f1: f1 / k,
        roc_auc: (!aucs.is_empty()).then(|| aucs.iter().sum::<f64>() / aucs.len() as f64),
        folds: folds.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub hyper: HyperParams,
    pub scores: CvScores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub best: HyperParams,
    pub best_index: usize,
    pub table: Vec<GridCell>,
}

/// `n_trees ∈ {50, 100}`, `max_depth ∈ {4, 8, unlimited}`,
/// `min_samples_leaf ∈ {1, 5}`.
pub fn default_grid() -> Vec<HyperParams> {
    let mut grid = Vec::new();
    for n_trees in [50, 100] {
        for max_depth in [Some(4), Some(8), None] {
            for min_samples_leaf in [1, 5] {
                grid.push(HyperParams {
                    n_trees,
                    max_depth,
                    min_samples_leaf,
                    features_per_split: FeaturesPerSplit::Sqrt,
                });
            }
        }
    }
    grid
}

/// Simpler models win ties: fewer trees, then shallower, then larger leaves.
fn simpler(a: &HyperParams, b: &HyperParams) -> Cmp {
    let depth = |h: &HyperParams| h.max_depth.unwrap_or(usize::MAX);
    a.n_trees
        .cmp(&b.n_trees)
        .then(depth(a).cmp(&depth(b)))
        .then(b.min_samples_leaf.cmp(&a.min_samples_leaf))
}

/// Scores every cell by k-fold mean F1 and returns the best one. Ties go to
/// the simpler model and then to grid order.
pub fn grid_search_cv(
    samples: &Samples,
    grid: &[HyperParams],
    k: usize,
    seed: u64,
) -> Result<GridSearchResult, LearnError> {
    if grid.is_empty() {
        return Err(LearnError::EmptyGrid);
    }
    let table = grid
        .iter()
        .map(|h| {
            Ok(GridCell {
                hyper: *h,
                scores: cross_validate(samples, h, k, seed)?,
            })
        })
        .collect::<Result<Vec<_>, LearnError>>()?;
    let mut best_index = 0;
    for (i, cell) in table.iter().enumerate().skip(1) {
        let cur = &table[best_index];
        let better = match cell.scores.f1.total_cmp(&cur.scores.f1) {
            Cmp::Greater => true,
            Cmp::Less => false,
            Cmp::Equal => simpler(&cell.hyper, &cur.hyper) == Cmp::Less,
        };
        if better {
            best_index = i;
        }
    }
    Ok(GridSearchResult {
        best: table[best_index].hyper,
        best_index,
        table,
    })
}

/// Sample-weighted Gini decrease per feature, normalized to sum to one.
/// A forest without splits yields all zeros.
pub fn feature_importance(forest: &Forest) -> IndexMap<String, f64> {
    let mut acc = vec![0.0; forest.feature_names.len()];
    for t in &forest.trees {
        t.accumulate_importance(&mut acc);
    }
    let total: f64 = acc.iter().sum();
    forest
        .feature_names
        .iter()
        .zip(acc)
        .map(|(n, v)| (n.clone(), if total > 0.0 { v / total } else { 0.0 }))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfeRound {
    pub features: Vec<String>,
    pub cv_f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfeResult {
    pub survivors: Vec<String>,
    /// Eliminated features, first-dropped first.
    pub eliminated: Vec<String>,
    pub rounds: Vec<RfeRound>,
}

/// Recursive feature elimination, one feature per round. The least important
/// feature is dropped; among equals the one later in feature order goes.
/// With `k` set, each round's feature set is also scored by k-fold mean F1.
pub fn rfe_select(
    samples: &Samples,
    hyper: &HyperParams,
    target_count: usize,
    k: Option<usize>,
    seed: u64,
) -> Result<RfeResult, LearnError> {
    let available = samples.n_features();
    if target_count == 0 || target_count > available {
        return Err(LearnError::InvalidTarget {
            target: target_count,
            available,
        });
    }
    let mut current = samples.feature_names.clone();
    let mut eliminated = Vec::new();
    let mut rounds = Vec::new();
    loop {
        let view = samples.select_features(&current);
        let cv_f1 = match k {
            Some(k) => Some(cross_validate(&view, hyper, k, seed)?.f1),
            None => None,
        };
        rounds.push(RfeRound {
            features: current.clone(),
            cv_f1,
        });
        if current.len() == target_count {
            break;
        }
        let forest = train_forest(&view, hyper, seed)?;
        let imp = feature_importance(&forest);
        let mut drop = 0;
        for (i, name) in current.iter().enumerate() {
            if imp[name] <= imp[&current[drop]] {
                drop = i;
            }
        }
        eliminated.push(current.remove(drop));
    }
    Ok(RfeResult {
        survivors: current,
        eliminated,
        rounds,
    })
}

/// Pairwise Pearson correlation between feature columns. Columns with zero
/// variance correlate 0 with everything else (1 with themselves).
pub fn pearson_matrix(samples: &Samples) -> Vec<Vec<f64>> {
    let p = samples.n_features();
    let n = samples.len() as f64;
    let means: Vec<f64> = (0..p)
        .map(|j| samples.rows.iter().map(|r| r[j]).sum::<f64>() / n)
        .collect();
    let means = &means;
    let centred = |j: usize| samples.rows.iter().map(move |r| r[j] - means[j]);
    let norms: Vec<f64> = (0..p).map(|j| centred(j).map(|d| d * d).sum::<f64>().sqrt()).collect();
    (0..p)
        .map(|a| {
            (0..p)
                .map(|b| {
                    if a == b {
                        1.0
                    } else if norms[a] == 0.0 || norms[b] == 0.0 {
                        0.0
                    } else {
                        centred(a).zip(centred(b)).map(|(x, y)| x * y).sum::<f64>()
                            / (norms[a] * norms[b])
                    }
                })
                .collect()
        })
        .collect()
}
