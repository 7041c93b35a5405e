//! Dataset loading, preprocessing, partitioning and synthetic suite
//! generation.

mod io;
mod preprocess;
mod split;
mod synthetic;

pub use io::{
    load_dataset, read_csv, read_json, save_suite, schema_columns, write_csv, write_json,
    FileFormat,
};
pub use preprocess::{
    drop_low_coverage, fit_normalize, fit_normalize_split, impute_missing, NormalizationParams,
};
pub use split::{kfold_partition, stratified_folds, stratified_split, RecordRef, SplitSpec};
pub use synthetic::{generate_synthetic_suite, SyntheticConfig, SyntheticWorld, TestProfile};

use serde::{Deserialize, Serialize};

use crate::model::{Suite, TestCaseRecord, FEATURE_NAMES};

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}, field `{field}`: {message}")]
    Parse {
        line: u64,
        field: String,
        message: String,
    },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("csv: {0}")]
    Csv(#[source] csv::Error),
    #[error("json: {0}")]
    Json(#[source] serde_json::Error),
    #[error("feature `{0}` has no non-missing values")]
    AllMissingColumn(String),
    #[error("feature `{0}` still has MISSING values; impute first")]
    MissingValues(String),
    #[error("k = {k} folds requested for {n} records")]
    KTooLarge { k: usize, n: usize },
    #[error("invalid fold count k = {0}; need k >= 2")]
    InvalidK(usize),
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("invalid synthetic config: {0}")]
    Config(String),
}

/// One or more suites sharing a feature schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub suites: Vec<Suite>,
    pub feature_names: Vec<String>,
    /// Min-max ranges captured by the last normalization fit.
    pub normalization: Option<NormalizationParams>,
}

impl Dataset {
    pub fn from_suites(suites: Vec<Suite>) -> Self {
        Self {
            suites,
            feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            normalization: None,
        }
    }

    pub fn records(&self) -> impl Iterator<Item = &TestCaseRecord> {
        self.suites.iter().flat_map(|s| s.records.iter())
    }

    pub fn n_records(&self) -> usize {
        self.suites.iter().map(Suite::len).sum()
    }

    pub fn labels(&self) -> Vec<bool> {
        self.records().map(|r| r.label).collect()
    }
}
