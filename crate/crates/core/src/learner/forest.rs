use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{train_tree_on, TreeNode};
use super::{HyperParams, LearnError, Samples};
use crate::model::FeatureVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<TreeNode>,
    pub hyper: HyperParams,
    pub feature_names: Vec<String>,
    pub seed: u64,
}

fn tree_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Bagged CART ensemble. Tree `i` draws its bootstrap and feature subsets
/// from ChaCha stream `i` of `seed`, so the result does not depend on how
/// trees are scheduled across threads.
pub fn train_forest(samples: &Samples, hyper: &HyperParams, seed: u64) -> Result<Forest, LearnError> {
    hyper.validate()?;
    if samples.is_empty() {
        return Err(LearnError::Empty);
    }
    if !samples.has_both_classes() {
        return Err(LearnError::SingleClass);
    }
    let n = samples.len();
    let trees = (0..hyper.n_trees)
        .into_par_iter()
        .map(|i| {
            let mut rng = tree_rng(seed, i);
            let bootstrap: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            train_tree_on(samples, bootstrap, hyper, &mut rng)
        })
        .collect();
    Ok(Forest {
        trees,
        hyper: *hyper,
        feature_names: samples.feature_names.clone(),
        seed,
    })
}

impl Forest {
    /// Mean leaf positive fraction over all trees.
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict(row)).sum();
        (sum / self.trees.len() as f64).clamp(0.0, 1.0)
    }

    /// Looks up the forest's features by name; extra entries in `features`
    /// are ignored.
    pub fn predict_proba(&self, features: &FeatureVector) -> Result<f64, LearnError> {
        let row = features.dense(&self.feature_names).ok_or_else(|| {
            let missing = self
                .feature_names
                .iter()
                .find(|n| features.get(n).flatten().is_none())
                .cloned()
                .unwrap_or_default();
            LearnError::FeatureMismatch(format!("`{missing}` absent or MISSING"))
        })?;
        Ok(self.predict_row(&row))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("forest is always serializable")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}
