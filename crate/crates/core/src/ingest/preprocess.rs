use std::collections::HashSet;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::{Dataset, IngestError};

/// Replaces every MISSING value with its column mean over the whole dataset.
///
/// A MISSING `exec_time` feature also fills the record's raw execution time.
pub fn impute_missing(dataset: &Dataset) -> Result<Dataset, IngestError> {
    let mut means = IndexMap::new();
    for name in &dataset.feature_names {
        let mut sum = 0.0;
        let mut count = 0usize;
        let mut any_missing = false;
        for r in dataset.records() {
            match r.features.get(name).flatten() {
                Some(v) => {
                    sum += v;
                    count += 1;
                }
                None => any_missing = true,
            }
        }
        if any_missing {
            if count == 0 {
                return Err(IngestError::AllMissingColumn(name.clone()));
            }
            means.insert(name.clone(), sum / count as f64);
        }
    }

    let mut out = dataset.clone();
    for suite in &mut out.suites {
        for r in &mut suite.records {
            for (name, mean) in &means {
                if r.features.get(name).flatten().is_none() {
                    r.features.set(name, Some(*mean));
                    if name == "exec_time" {
                        r.exec_time = *mean;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Removes records covering fewer than `min_elements` code elements.
/// Faults that lose their last detecting test are dropped and counted in the
/// suite's fault matrix.
pub fn drop_low_coverage(dataset: &Dataset, min_elements: usize) -> (Dataset, usize) {
    let mut out = dataset.clone();
    let mut dropped = 0;
    for suite in &mut out.suites {
        let before = suite.records.len();
        suite.records.retain(|r| r.coverage.len() >= min_elements);
        if suite.records.len() != before {
            dropped += before - suite.records.len();
            let keep: HashSet<&str> = suite.records.iter().map(|r| r.id.as_str()).collect();
            suite.faults = suite.faults.restrict(&keep);
        }
    }
    (out, dropped)
}

/// Per-feature `(min, max)` ranges for min-max scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationParams {
    pub ranges: IndexMap<String, (f64, f64)>,
}

impl NormalizationParams {
    pub fn fit(dataset: &Dataset) -> Result<Self, IngestError> {
        let mut ranges = IndexMap::new();
        for name in &dataset.feature_names {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for r in dataset.records() {
                let v = r
                    .features
                    .get(name)
                    .flatten()
                    .ok_or_else(|| IngestError::MissingValues(name.clone()))?;
                lo = lo.min(v);
                hi = hi.max(v);
            }
            if lo > hi {
                // empty dataset
                lo = 0.0;
                hi = 0.0;
            }
            ranges.insert(name.clone(), (lo, hi));
        }
        Ok(Self { ranges })
    }

    /// Scales one value. Constant columns map to 0; values outside the fit
    /// range extrapolate linearly.
    pub fn scale(&self, name: &str, value: f64) -> Option<f64> {
        let &(lo, hi) = self.ranges.get(name)?;
        Some(if hi > lo { (value - lo) / (hi - lo) } else { 0.0 })
    }

    pub fn apply(&self, dataset: &Dataset) -> Result<Dataset, IngestError> {
        let mut out = dataset.clone();
        for suite in &mut out.suites {
            for r in &mut suite.records {
                for (name, _) in &self.ranges {
                    let v = r
                        .features
                        .get(name)
                        .flatten()
                        .ok_or_else(|| IngestError::MissingValues(name.clone()))?;
                    r.features.set(name, self.scale(name, v));
                }
            }
        }
        out.normalization = Some(self.clone());
        Ok(out)
    }
}

/// Fits min-max ranges on `dataset` itself and applies them.
pub fn fit_normalize(dataset: &Dataset) -> Result<Dataset, IngestError> {
    NormalizationParams::fit(dataset)?.apply(dataset)
}

/// Fits on the training portion only and applies the same ranges to both.
pub fn fit_normalize_split(
    train: &Dataset,
    test: &Dataset,
) -> Result<(Dataset, Dataset), IngestError> {
    let params = NormalizationParams::fit(train)?;
    Ok((params.apply(train)?, params.apply(test)?))
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::*;
    use crate::model::{FeatureVector, Suite, TestCaseRecord};

    fn dataset(column: &[Option<f64>]) -> Dataset {
        let records = column
            .iter()
            .enumerate()
            .map(|(i, v)| {
                TestCaseRecord::new(
                    format!("t{i}"),
                    FeatureVector::from_pairs([("x", *v)]),
                    BTreeSet::new(),
                    1.0,
                    BTreeSet::new(),
                )
            })
            .collect();
        let mut ds = Dataset::from_suites(vec![Suite::from_records("s", records)]);
        ds.feature_names = vec!["x".into()];
        ds
    }

    fn column(ds: &Dataset) -> Vec<Option<f64>> {
        ds.records().map(|r| r.features.get("x").flatten()).collect()
    }

    #[test]
    fn mean_imputation() {
        let ds = impute_missing(&dataset(&[Some(1.0), None, Some(3.0)])).unwrap();
        assert_eq!(column(&ds), vec![Some(1.0), Some(2.0), Some(3.0)]);
    }

    #[test]
    fn imputation_without_missing_is_identity() {
        let ds = dataset(&[Some(1.0), Some(5.0)]);
        assert_eq!(impute_missing(&ds).unwrap(), ds);
    }

    #[test]
    fn all_missing_column_errors() {
        assert!(matches!(
            impute_missing(&dataset(&[None, None])),
            Err(IngestError::AllMissingColumn(name)) if name == "x"
        ));
    }

    #[test]
    fn imputation_is_idempotent() {
        let once = impute_missing(&dataset(&[Some(2.0), None, Some(7.5), None])).unwrap();
        assert_eq!(impute_missing(&once).unwrap(), once);
    }

    #[test]
    fn min_max_scaling() {
        let ds = fit_normalize(&dataset(&[Some(0.0), Some(5.0), Some(10.0)])).unwrap();
        assert_eq!(column(&ds), vec![Some(0.0), Some(0.5), Some(1.0)]);
        let params = ds.normalization.unwrap();
        assert_eq!(params.scale("x", 20.0), Some(2.0));
    }

    #[test]
    fn constant_column_maps_to_zero() {
        let ds = fit_normalize(&dataset(&[Some(7.0); 3])).unwrap();
        assert_eq!(column(&ds), vec![Some(0.0); 3]);
    }

    #[test]
    fn normalize_requires_imputation() {
        assert!(matches!(
            fit_normalize(&dataset(&[Some(1.0), None])),
            Err(IngestError::MissingValues(_))
        ));
    }

    fn coverage_dataset() -> Dataset {
        let mk = |id: &str, cov: &[&str], det: &[&str]| {
            TestCaseRecord::new(
                id,
                FeatureVector::new(),
                cov.iter().map(|s| s.to_string()).collect(),
                1.0,
                det.iter().map(|s| s.to_string()).collect(),
            )
        };
        let records = vec![
            mk("a", &[], &["f_only_a"]),
            mk("b", &["e1", "e2"], &["f1"]),
            mk("c", &["e1", "e2", "e3", "e4", "e5"], &["f1"]),
        ];
        Dataset::from_suites(vec![Suite::from_records("s", records)])
    }

    #[test]
    fn drop_low_coverage_zero_is_identity() {
        let ds = coverage_dataset();
        let (out, dropped) = drop_low_coverage(&ds, 0);
        assert_eq!(dropped, 0);
        assert_eq!(out, ds);
    }

    #[test]
    fn drop_low_coverage_removes_rows_and_orphaned_faults() {
        let (out, dropped) = drop_low_coverage(&coverage_dataset(), 1);
        assert_eq!(dropped, 1);
        let suite = &out.suites[0];
        assert_eq!(suite.len(), 2);
        assert_eq!(suite.faults.faults(), &["f1".to_string()]);
        assert_eq!(suite.faults.dropped_undetectable(), 1);
        let report = crate::model::validate_suite(&suite.records, &suite.faults);
        assert!(report.is_valid());
        assert!(report.warnings.is_empty());
    }

    proptest::proptest! {
        #[test]
        fn normalized_values_in_unit_interval(values in proptest::collection::vec(-1e6f64..1e6, 1..40)) {
            let ds = fit_normalize(&dataset(&values.iter().map(|v| Some(*v)).collect::<Vec<_>>())).unwrap();
            for v in column(&ds) {
                let v = v.unwrap();
                proptest::prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}
