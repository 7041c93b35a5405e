//! Random-forest fault-likelihood classifier, written from scratch.
//!
//! Trees are CART with Gini impurity; the forest averages leaf positive
//! fractions. Model selection is a k-fold grid search on mean F1, and
//! features can be pruned with recursive elimination on Gini importance.

mod forest;
mod metrics;
mod search;
mod tree;

pub use forest::{train_forest, Forest};
pub use metrics::{classification_metrics, roc_auc, EvalReport};
pub use search::{
    cross_validate, default_grid, feature_importance, grid_search_cv, pearson_matrix, rfe_select,
    CvScores, GridCell, GridSearchResult, RfeResult,
};
pub use tree::{gini, train_tree, train_tree_on, TreeNode};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::ingest::{Dataset, IngestError};

#[derive(Debug, thiserror::Error)]
pub enum LearnError {
    #[error("training data contains a single class")]
    SingleClass,
    #[error("no training samples")]
    Empty,
    #[error("feature vector does not match the forest's features: {0}")]
    FeatureMismatch(String),
    #[error("record `{id}` has a MISSING value for `{feature}`")]
    MissingValue { id: String, feature: String },
    #[error("empty hyperparameter grid")]
    EmptyGrid,
    #[error("invalid hyperparameters: {0}")]
    InvalidHyper(String),
    #[error("target feature count {target} outside 1..={available}")]
    InvalidTarget { target: usize, available: usize },
    #[error(transparent)]
    Fold(#[from] IngestError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeaturesPerSplit {
    Sqrt,
    All,
    Count(usize),
}

impl FeaturesPerSplit {
    pub fn resolve(self, n_features: usize) -> usize {
        let k = match self {
            FeaturesPerSplit::Sqrt => (n_features as f64).sqrt().floor() as usize,
            FeaturesPerSplit::All => n_features,
            FeaturesPerSplit::Count(k) => k,
        };
        k.clamp(1, n_features.max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HyperParams {
    pub n_trees: usize,
    /// `None` grows until purity or `min_samples_leaf` stops the split.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub features_per_split: FeaturesPerSplit,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: Some(8),
            min_samples_leaf: 1,
            features_per_split: FeaturesPerSplit::Sqrt,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<(), LearnError> {
        if self.n_trees == 0 || self.min_samples_leaf == 0 || self.max_depth == Some(0) {
            return Err(LearnError::InvalidHyper(format!("{self:?}")));
        }
        if self.features_per_split == FeaturesPerSplit::Count(0) {
            return Err(LearnError::InvalidHyper("features_per_split = 0".into()));
        }
        Ok(())
    }
}

/// Dense training matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    pub feature_names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<bool>,
}

impl Samples {
    pub fn new(feature_names: Vec<String>, rows: Vec<Vec<f64>>, labels: Vec<bool>) -> Self {
        debug_assert_eq!(rows.len(), labels.len());
        Self {
            feature_names,
            rows,
            labels,
        }
    }

    /// All records of `dataset`, using its feature schema.
    pub fn from_dataset(dataset: &Dataset) -> Result<Self, LearnError> {
        Self::from_records(dataset.records(), &dataset.feature_names)
    }

    pub fn from_records<'a>(
        records: impl IntoIterator<Item = &'a crate::model::TestCaseRecord>,
        feature_names: &[String],
    ) -> Result<Self, LearnError> {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for r in records {
            let mut row = Vec::with_capacity(feature_names.len());
            for name in feature_names {
                let v = r.features.get(name).flatten().ok_or_else(|| LearnError::MissingValue {
                    id: r.id.clone(),
                    feature: name.clone(),
                })?;
                row.push(v);
            }
            rows.push(row);
            labels.push(r.label);
        }
        Ok(Self::new(feature_names.to_vec(), rows, labels))
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            feature_names: self.feature_names.clone(),
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Projects onto the named columns, in the given order.
    pub fn select_features(&self, names: &[String]) -> Self {
        let cols: Vec<usize> = names
            .iter()
            .map(|n| {
                self.feature_names
                    .iter()
                    .position(|f| f == n)
                    .expect("feature present")
            })
            .collect();
        Self {
            feature_names: names.to_vec(),
            rows: self
                .rows
                .iter()
                .map(|r| cols.iter().map(|&c| r[c]).collect())
                .collect(),
            labels: self.labels.clone(),
        }
    }

    /// Appends a column holding `value` for every row.
    pub fn with_constant_feature(mut self, name: &str, value: f64) -> Self {
        self.feature_names.push(name.to_string());
        for r in &mut self.rows {
            r.push(value);
        }
        self
    }

    pub fn has_both_classes(&self) -> bool {
        self.labels.iter().any(|&l| l) && self.labels.iter().any(|&l| !l)
    }
}

/// Two Gaussian blobs separated along two informative features `x0`, `x1`
/// plus one pure-noise column `noise`. Used as a learner fixture.
pub fn separable_samples(n: usize, seed: u64) -> Samples {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spread = Normal::new(0.0, 0.6).expect("valid sigma");
    let noise = Normal::new(0.0, 1.0).expect("valid sigma");
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = i % 2 == 0;
        let centre = if label { 1.5 } else { -1.5 };
        rows.push(vec![
            centre + spread.sample(&mut rng),
            centre + spread.sample(&mut rng),
            noise.sample(&mut rng),
        ]);
        labels.push(label);
    }
    Samples::new(
        vec!["x0".into(), "x1".into(), "noise".into()],
        rows,
        labels,
    )
}
