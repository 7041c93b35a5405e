use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{HyperParams, Samples};

/// A CART node. Samples with `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreeNode {
    Leaf {
        positive_fraction: f64,
        n_samples: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        n_samples: usize,
        /// `n·G(parent) − n_l·G(left) − n_r·G(right)`.
        impurity_decrease: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf {
                    positive_fraction, ..
                } => return *positive_fraction,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    node = if row[*feature] <= *threshold { left } else { right };
                }
            }
        }
    }

    pub fn n_samples(&self) -> usize {
        match self {
            TreeNode::Leaf { n_samples, .. } | TreeNode::Split { n_samples, .. } => *n_samples,
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn max_feature_index(&self) -> Option<usize> {
        match self {
            TreeNode::Leaf { .. } => None,
            TreeNode::Split {
                feature,
                left,
                right,
                ..
            } => [Some(*feature), left.max_feature_index(), right.max_feature_index()]
                .into_iter()
                .flatten()
                .max(),
        }
    }

    /// Adds each split's impurity decrease to `acc[feature]`.
    pub fn accumulate_importance(&self, acc: &mut [f64]) {
        if let TreeNode::Split {
            feature,
            impurity_decrease,
            left,
            right,
            ..
        } = self
        {
            acc[*feature] += impurity_decrease;
            left.accumulate_importance(acc);
            right.accumulate_importance(acc);
        }
    }
}

/// Gini impurity of a binary node with `pos` positives out of `n`.
pub fn gini(pos: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = pos as f64 / n as f64;
    1.0 - p * p - (1.0 - p) * (1.0 - p)
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
}

struct Grower<'a, R> {
    samples: &'a Samples,
    hyper: &'a HyperParams,
    mtry: usize,
    rng: &'a mut R,
}

impl<R: Rng> Grower<'_, R> {
    fn leaf(&self, idx: &[usize]) -> TreeNode {
        let pos = idx.iter().filter(|&&i| self.samples.labels[i]).count();
        TreeNode::Leaf {
            positive_fraction: if idx.is_empty() { 0.0 } else { pos as f64 / idx.len() as f64 },
            n_samples: idx.len(),
        }
    }

    fn best_split(&mut self, idx: &[usize]) -> Option<BestSplit> {
        let n = idx.len();
        let total_pos = idx.iter().filter(|&&i| self.samples.labels[i]).count();
        let parent = n as f64 * gini(total_pos, n);
        let msl = self.hyper.min_samples_leaf;
        let p = self.samples.n_features();
        let mut candidates: Vec<usize> = sample(self.rng, p, self.mtry).into_vec();
        candidates.sort_unstable();

        let mut best: Option<BestSplit> = None;
        let mut sorted = idx.to_vec();
        for f in candidates {
            let rows = &self.samples.rows;
            sorted.sort_by(|&a, &b| rows[a][f].total_cmp(&rows[b][f]));
            let mut left_pos = 0;
            for k in 0..n - 1 {
                if self.samples.labels[sorted[k]] {
                    left_pos += 1;
                }
                let (lo, hi) = (rows[sorted[k]][f], rows[sorted[k + 1]][f]);
                let n_left = k + 1;
                let n_right = n - n_left;
                if lo == hi || n_left < msl || n_right < msl {
                    continue;
                }
                let child = n_left as f64 * gini(left_pos, n_left)
                    + n_right as f64 * gini(total_pos - left_pos, n_right);
                let gain = parent - child;
                if gain > 1e-12 && best.as_ref().is_none_or(|b| gain > b.gain) {
                    let mut threshold = lo + (hi - lo) / 2.0;
                    if threshold >= hi {
                        threshold = lo;
                    }
                    best = Some(BestSplit {
                        feature: f,
                        threshold,
                        gain,
                    });
                }
            }
        }
        best
    }

    fn grow(&mut self, idx: Vec<usize>, depth: usize) -> TreeNode {
        let n = idx.len();
        let pos = idx.iter().filter(|&&i| self.samples.labels[i]).count();
        let at_depth = self.hyper.max_depth.is_some_and(|d| depth >= d);
        if at_depth || pos == 0 || pos == n || n < 2 * self.hyper.min_samples_leaf {
            return self.leaf(&idx);
        }
        let Some(split) = self.best_split(&idx) else {
            return self.leaf(&idx);
        };
        let (left, right): (Vec<usize>, Vec<usize>) = idx
            .iter()
            .partition(|&&i| self.samples.rows[i][split.feature] <= split.threshold);
        TreeNode::Split {
            feature: split.feature,
            threshold: split.threshold,
            n_samples: n,
            impurity_decrease: split.gain,
            left: Box::new(self.grow(left, depth + 1)),
            right: Box::new(self.grow(right, depth + 1)),
        }
    }
}

/// Grows a tree on the given multiset of row indices (duplicates allowed, as
/// produced by bootstrapping).
pub fn train_tree_on<R: Rng>(
    samples: &Samples,
    indices: Vec<usize>,
    hyper: &HyperParams,
    rng: &mut R,
) -> TreeNode {
    let mut grower = Grower {
        samples,
        hyper,
        mtry: hyper.features_per_split.resolve(samples.n_features()),
        rng,
    };
    grower.grow(indices, 0)
}

/// Grows a tree on every row of `samples`.
pub fn train_tree<R: Rng>(samples: &Samples, hyper: &HyperParams, rng: &mut R) -> TreeNode {
    train_tree_on(samples, (0..samples.len()).collect(), hyper, rng)
}
