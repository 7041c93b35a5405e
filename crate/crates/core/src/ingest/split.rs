use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, IngestError};
use crate::model::Suite;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            seed: 0,
        }
    }
}

/// Position of a record inside a [`Dataset`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RecordRef {
    pub suite: usize,
    pub index: usize,
}

fn all_refs(dataset: &Dataset) -> Vec<(RecordRef, bool)> {
    dataset
        .suites
        .iter()
        .enumerate()
        .flat_map(|(s, suite)| {
            suite
                .records
                .iter()
                .enumerate()
                .map(move |(i, r)| (RecordRef { suite: s, index: i }, r.label))
        })
        .collect()
}

fn subset(dataset: &Dataset, keep: &HashSet<RecordRef>) -> Dataset {
    let suites = dataset
        .suites
        .iter()
        .enumerate()
        .filter_map(|(s, suite)| {
            let records: Vec<_> = suite
                .records
                .iter()
                .enumerate()
                .filter(|(i, _)| keep.contains(&RecordRef { suite: s, index: *i }))
                .map(|(_, r)| r.clone())
                .collect();
            if records.is_empty() {
                return None;
            }
            let ids: HashSet<&str> = records.iter().map(|r| r.id.as_str()).collect();
            let faults = suite.faults.restrict(&ids);
            Some(Suite {
                id: suite.id.clone(),
                records,
                faults,
            })
        })
        .collect();
    Dataset {
        suites,
        feature_names: dataset.feature_names.clone(),
        normalization: dataset.normalization.clone(),
    }
}

/// Label-stratified train/test split. Per class, `floor(count * (1 - f))`
/// records go to test and the rest to train. Suite membership and record
/// order are preserved on both sides.
pub fn stratified_split(
    dataset: &Dataset,
    spec: &SplitSpec,
) -> Result<(Dataset, Dataset), IngestError> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(IngestError::InvalidSplit(format!(
            "train_fraction {} not in (0, 1)",
            spec.train_fraction
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let refs = all_refs(dataset);
    let mut test = HashSet::new();
    for class in [true, false] {
        let mut members: Vec<RecordRef> = refs
            .iter()
            .filter(|(_, l)| *l == class)
            .map(|(r, _)| *r)
            .collect();
        members.shuffle(&mut rng);
        // 1e-9 absorbs representation error in (1 - f), e.g. 5 * (1 - 0.8).
        let n_test = (members.len() as f64 * (1.0 - spec.train_fraction) + 1e-9).floor() as usize;
        test.extend(members.into_iter().take(n_test));
    }
    let train: HashSet<RecordRef> = refs
        .iter()
        .map(|(r, _)| *r)
        .filter(|r| !test.contains(r))
        .collect();
    Ok((subset(dataset, &train), subset(dataset, &test)))
}

/// Stratified k-fold assignment over a label vector: each class is shuffled,
/// classes are concatenated (positives first) and dealt round-robin, so fold
/// sizes differ by at most one.
pub fn stratified_folds(labels: &[bool], k: usize, seed: u64) -> Result<Vec<Vec<usize>>, IngestError> {
    if k < 2 {
        return Err(IngestError::InvalidK(k));
    }
    if k > labels.len() {
        return Err(IngestError::KTooLarge { k, n: labels.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order = Vec::with_capacity(labels.len());
    for class in [true, false] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        members.shuffle(&mut rng);
        order.extend(members);
    }
    let mut folds = vec![Vec::new(); k];
    for (pos, idx) in order.into_iter().enumerate() {
        folds[pos % k].push(idx);
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

/// [`stratified_folds`] over the records of a dataset.
pub fn kfold_partition(
    dataset: &Dataset,
    k: usize,
    seed: u64,
) -> Result<Vec<Vec<RecordRef>>, IngestError> {
    let refs = all_refs(dataset);
    let labels: Vec<bool> = refs.iter().map(|(_, l)| *l).collect();
    let folds = stratified_folds(&labels, k, seed)?;
    Ok(folds
        .into_iter()
        .map(|f| f.into_iter().map(|i| refs[i].0).collect())
        .collect())
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::*;
    use crate::model::{FeatureVector, TestCaseRecord};

    fn labelled(n: usize, n_pos: usize) -> Dataset {
        let records = (0..n)
            .map(|i| {
                let detects: BTreeSet<String> = if i < n_pos {
                    [format!("f{i}")].into_iter().collect()
                } else {
                    BTreeSet::new()
                };
                TestCaseRecord::new(format!("t{i}"), FeatureVector::new(), BTreeSet::new(), 1.0, detects)
            })
            .collect();
        Dataset::from_suites(vec![Suite::from_records("s", records)])
    }

    fn counts(ds: &Dataset) -> (usize, usize) {
        let pos = ds.records().filter(|r| r.label).count();
        (pos, ds.n_records() - pos)
    }

    #[test]
    fn exact_proportions() {
        let spec = SplitSpec { train_fraction: 0.8, seed: 1 };
        let (train, test) = stratified_split(&labelled(10, 5), &spec).unwrap();
        assert_eq!(counts(&train), (4, 4));
        assert_eq!(counts(&test), (1, 1));
    }

    #[test]
    fn split_is_deterministic_and_partitions() {
        let ds = labelled(57, 13);
        let spec = SplitSpec { train_fraction: 0.8, seed: 9 };
        let a = stratified_split(&ds, &spec).unwrap();
        let b = stratified_split(&ds, &spec).unwrap();
        assert_eq!(a, b);
        let ids = |d: &Dataset| d.records().map(|r| r.id.clone()).collect::<BTreeSet<_>>();
        let (tr, te) = (ids(&a.0), ids(&a.1));
        assert!(tr.is_disjoint(&te));
        assert_eq!(tr.len() + te.len(), 57);
    }

    #[test]
    fn thousand_records_ten_percent_positive() {
        let ds = labelled(1000, 100);
        // 2% held out: 20 records of which 2 positive, counted from the output.
        let spec = SplitSpec { train_fraction: 0.98, seed: 3 };
        let (train, test) = stratified_split(&ds, &spec).unwrap();
        assert_eq!(counts(&test), (2, 18));
        assert_eq!(counts(&train), (98, 882));
        // Default 80/20.
        let (_, test) = stratified_split(&ds, &SplitSpec { train_fraction: 0.8, seed: 3 }).unwrap();
        assert_eq!(counts(&test), (20, 180));
    }

    #[test]
    fn rejects_degenerate_fraction() {
        assert!(stratified_split(&labelled(4, 2), &SplitSpec { train_fraction: 1.0, seed: 0 }).is_err());
    }

    #[test]
    fn ten_records_five_folds() {
        let folds = kfold_partition(&labelled(10, 5), 5, 0).unwrap();
        assert!(folds.iter().all(|f| f.len() == 2));
    }

    #[test]
    fn eleven_records_remainder_rule() {
        let folds = kfold_partition(&labelled(11, 4), 5, 0).unwrap();
        let mut sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        sizes.sort_unstable_by(|a, b| b.cmp(a));
        assert_eq!(sizes, vec![3, 2, 2, 2, 2]);
    }

    #[test]
    fn folds_form_partition() {
        let ds = labelled(23, 7);
        let folds = kfold_partition(&ds, 5, 4).unwrap();
        let mut all: Vec<RecordRef> = folds.concat();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 23);
        assert_eq!(folds.iter().map(Vec::len).sum::<usize>(), 23);
        assert_eq!(folds, kfold_partition(&ds, 5, 4).unwrap());
    }

    #[test]
    fn folds_are_stratified() {
        let labels: Vec<bool> = (0..50).map(|i| i % 5 == 0).collect();
        let folds = stratified_folds(&labels, 5, 11).unwrap();
        for f in folds {
            assert_eq!(f.iter().filter(|&&i| labels[i]).count(), 2);
        }
    }

    #[test]
    fn k_too_large() {
        assert!(matches!(
            kfold_partition(&labelled(3, 1), 5, 0),
            Err(IngestError::KTooLarge { k: 5, n: 3 })
        ));
    }
}
