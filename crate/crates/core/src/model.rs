//! Core domain types shared by every stage of the prioritization engine.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

/// Canonical per-test feature columns, in file order.
pub const FEATURE_NAMES: [&str; 7] = [
    "cyclomatic_complexity",
    "code_churn",
    "dependency_degree",
    "exec_time",
    "line_coverage",
    "branch_coverage",
    "mutation_kill_score",
];

/// Ordered feature-name → value map. `None` is the MISSING sentinel.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(IndexMap<String, Option<f64>>);

impl FeatureVector {
    pub fn new() -> Self {
        Self(IndexMap::new())
    }

    pub fn from_pairs<I, S>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (S, Option<f64>)>,
        S: Into<String>,
    {
        Self(pairs.into_iter().map(|(k, v)| (k.into(), v)).collect())
    }

    pub fn set(&mut self, name: &str, value: Option<f64>) {
        if let Some(slot) = self.0.get_mut(name) {
            *slot = value;
        } else {
            self.0.insert(name.to_string(), value);
        }
    }

    /// `None` when the feature is absent, `Some(None)` when it is MISSING.
    pub fn get(&self, name: &str) -> Option<Option<f64>> {
        self.0.get(name).copied()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Option<f64>)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn has_missing(&self) -> bool {
        self.0.values().any(Option::is_none)
    }

    /// Dense values in the order of `names`; `None` if any is absent or MISSING.
    pub fn dense(&self, names: &[String]) -> Option<Vec<f64>> {
        names.iter().map(|n| self.0.get(n).copied().flatten()).collect()
    }
}

/// One test case of a suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestCaseRecord {
    pub id: String,
    pub features: FeatureVector,
    pub coverage: BTreeSet<String>,
    /// Raw execution time in seconds.
    pub exec_time: f64,
    /// Ground-truth faults this test exposes.
    pub detects: BTreeSet<String>,
    pub label: bool,
}

impl TestCaseRecord {
    /// Builds a record whose label is derived from `detects`.
    pub fn new(
        id: impl Into<String>,
        features: FeatureVector,
        coverage: BTreeSet<String>,
        exec_time: f64,
        detects: BTreeSet<String>,
    ) -> Self {
        let label = !detects.is_empty();
        Self {
            id: id.into(),
            features,
            coverage,
            exec_time,
            detects,
            label,
        }
    }
}

/// Which tests detect which faults.
///
/// Columns nobody detects are removed at construction and only counted in
/// `dropped_undetectable`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FaultMatrix {
    faults: Vec<String>,
    rows: IndexMap<String, Vec<bool>>,
    dropped_undetectable: usize,
}

impl FaultMatrix {
    /// Builds the matrix from the `detects` sets of `records`. Faults are
    /// sorted by identifier.
    pub fn from_records(records: &[TestCaseRecord]) -> Self {
        let faults: Vec<String> = records
            .iter()
            .flat_map(|r| r.detects.iter().cloned())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let rows = records
            .iter()
            .map(|r| {
                let row = faults.iter().map(|f| r.detects.contains(f)).collect();
                (r.id.clone(), row)
            })
            .collect();
        Self {
            faults,
            rows,
            dropped_undetectable: 0,
        }
    }

    /// Builds from explicit columns, dropping all-false fault columns.
    /// Rows whose width differs from `faults.len()` are rejected.
    pub fn new(
        faults: Vec<String>,
        rows: IndexMap<String, Vec<bool>>,
    ) -> Result<Self, ValidationError> {
        let m = faults.len();
        for (id, row) in &rows {
            if row.len() != m {
                return Err(ValidationError::WidthMismatch {
                    test: id.clone(),
                    expected: m,
                    found: row.len(),
                });
            }
        }
        let keep: Vec<usize> = (0..m).filter(|&j| rows.values().any(|r| r[j])).collect();
        let dropped = m - keep.len();
        let faults = keep.iter().map(|&j| faults[j].clone()).collect();
        let rows = rows
            .into_iter()
            .map(|(id, row)| (id, keep.iter().map(|&j| row[j]).collect()))
            .collect();
        Ok(Self {
            faults,
            rows,
            dropped_undetectable: dropped,
        })
    }

    /// Keeps only the rows for `ids`, then drops newly undetectable faults.
    pub fn restrict(&self, ids: &HashSet<&str>) -> Self {
        let rows: IndexMap<String, Vec<bool>> = self
            .rows
            .iter()
            .filter(|(id, _)| ids.contains(id.as_str()))
            .map(|(id, row)| (id.clone(), row.clone()))
            .collect();
        let mut out = Self::new(self.faults.clone(), rows).expect("widths already consistent");
        out.dropped_undetectable += self.dropped_undetectable;
        out
    }

    pub fn faults(&self) -> &[String] {
        &self.faults
    }

    pub fn m(&self) -> usize {
        self.faults.len()
    }

    pub fn row(&self, test_id: &str) -> Option<&[bool]> {
        self.rows.get(test_id).map(Vec::as_slice)
    }

    pub fn rows(&self) -> impl Iterator<Item = (&str, &[bool])> {
        self.rows.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn dropped_undetectable(&self) -> usize {
        self.dropped_undetectable
    }
}

/// A named test suite together with its fault matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Suite {
    pub id: String,
    pub records: Vec<TestCaseRecord>,
    pub faults: FaultMatrix,
}

impl Suite {
    /// Builds a suite whose fault matrix is derived from the records.
    pub fn from_records(id: impl Into<String>, records: Vec<TestCaseRecord>) -> Self {
        let faults = FaultMatrix::from_records(&records);
        Self {
            id: id.into(),
            records,
            faults,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn record(&self, id: &str) -> Option<&TestCaseRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    pub fn category(&self) -> SuiteCategory {
        categorize_suite(self.records.len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    Random,
    Greedy,
    MlOnly,
    QuantumEnhanced,
}

impl Policy {
    pub const ALL: [Policy; 4] = [
        Policy::Random,
        Policy::Greedy,
        Policy::MlOnly,
        Policy::QuantumEnhanced,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Policy::Random => "random",
            Policy::Greedy => "greedy",
            Policy::MlOnly => "ml_only",
            Policy::QuantumEnhanced => "quantum_enhanced",
        }
    }

    /// Display label used in tables and figures.
    pub fn label(self) -> &'static str {
        match self {
            Policy::Random => "Random",
            Policy::Greedy => "Greedy",
            Policy::MlOnly => "ML-Only",
            Policy::QuantumEnhanced => "Quantum-Enhanced",
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Policy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "random" => Ok(Policy::Random),
            "greedy" => Ok(Policy::Greedy),
            "ml_only" => Ok(Policy::MlOnly),
            "quantum_enhanced" => Ok(Policy::QuantumEnhanced),
            other => Err(format!("unknown policy `{other}`")),
        }
    }
}

/// A full execution order. The selected tests always form a prefix of
/// `sequence`, so the mask is stored as that prefix length.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ordering {
    policy: Policy,
    sequence: Vec<String>,
    n_selected: usize,
}

impl Ordering {
    /// Ordering in which every test counts as selected.
    pub fn all_selected(policy: Policy, sequence: Vec<String>) -> Result<Self, ValidationError> {
        let n = sequence.len();
        Self::with_selected_prefix(policy, sequence, n)
    }

    pub fn with_selected_prefix(
        policy: Policy,
        sequence: Vec<String>,
        n_selected: usize,
    ) -> Result<Self, ValidationError> {
        let mut seen = HashSet::with_capacity(sequence.len());
        for id in &sequence {
            if !seen.insert(id.as_str()) {
                return Err(ValidationError::DuplicateId(id.clone()));
            }
        }
        if n_selected > sequence.len() {
            return Err(ValidationError::SelectionNotPrefix);
        }
        Ok(Self {
            policy,
            sequence,
            n_selected,
        })
    }

    /// Rebuilds from an explicit selected-id list, which must be a prefix of
    /// `sequence` as a set.
    pub fn from_parts(
        policy: Policy,
        sequence: Vec<String>,
        selected: &[String],
    ) -> Result<Self, ValidationError> {
        let k = selected.len();
        if k > sequence.len() {
            return Err(ValidationError::SelectionNotPrefix);
        }
        let head: HashSet<&str> = sequence[..k].iter().map(String::as_str).collect();
        if selected.iter().any(|s| !head.contains(s.as_str())) {
            return Err(ValidationError::SelectionNotPrefix);
        }
        Self::with_selected_prefix(policy, sequence, k)
    }

    pub fn policy(&self) -> Policy {
        self.policy
    }

    pub fn sequence(&self) -> &[String] {
        &self.sequence
    }

    pub fn selected(&self) -> &[String] {
        &self.sequence[..self.n_selected]
    }

    pub fn len(&self) -> usize {
        self.sequence.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequence.is_empty()
    }

    /// True when `sequence` is exactly a permutation of the suite's ids.
    pub fn is_permutation_of(&self, suite: &Suite) -> bool {
        if self.sequence.len() != suite.records.len() {
            return false;
        }
        let ids: HashSet<&str> = suite.records.iter().map(|r| r.id.as_str()).collect();
        self.sequence.iter().all(|s| ids.contains(s.as_str()))
    }
}

/// On-disk form of an [`Ordering`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrderingFile {
    pub policy: Policy,
    pub suite_id: String,
    pub sequence: Vec<String>,
    pub selected: Vec<String>,
    pub seed: u64,
}

impl OrderingFile {
    pub fn new(ordering: &Ordering, suite_id: impl Into<String>, seed: u64) -> Self {
        Self {
            policy: ordering.policy,
            suite_id: suite_id.into(),
            sequence: ordering.sequence.clone(),
            selected: ordering.selected().to_vec(),
            seed,
        }
    }

    pub fn to_ordering(&self) -> Result<Ordering, ValidationError> {
        Ordering::from_parts(self.policy, self.sequence.clone(), &self.selected)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuiteCategory {
    Small,
    Medium,
    Large,
}

impl SuiteCategory {
    pub const ALL: [SuiteCategory; 3] = [
        SuiteCategory::Small,
        SuiteCategory::Medium,
        SuiteCategory::Large,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SuiteCategory::Small => "small",
            SuiteCategory::Medium => "medium",
            SuiteCategory::Large => "large",
        }
    }
}

impl fmt::Display for SuiteCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SuiteCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "small" => Ok(SuiteCategory::Small),
            "medium" => Ok(SuiteCategory::Medium),
            "large" => Ok(SuiteCategory::Large),
            other => Err(format!("unknown suite category `{other}`")),
        }
    }
}

/// Small below 50 tests, Medium for 50..=100, Large above 100.
pub fn categorize_suite(n_tests: usize) -> SuiteCategory {
    match n_tests {
        0..=49 => SuiteCategory::Small,
        50..=100 => SuiteCategory::Medium,
        _ => SuiteCategory::Large,
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ValidationError {
    #[error("duplicate test id `{0}`")]
    DuplicateId(String),
    #[error("test `{id}` has negative execution time {time}")]
    NegativeTime { id: String, time: f64 },
    #[error("fault-matrix row `{test}` has width {found}, expected {expected}")]
    WidthMismatch {
        test: String,
        expected: usize,
        found: usize,
    },
    #[error("fault-matrix row `{0}` has no matching test record")]
    UnknownRow(String),
    #[error("selected tests do not form a prefix of the sequence")]
    SelectionNotPrefix,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ValidationWarning {
    UndetectableFault(String),
    LabelMismatch(String),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub errors: Vec<ValidationError>,
    pub warnings: Vec<ValidationWarning>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.errors.is_empty()
    }
}

/// Structural checks over a suite and its fault matrix. Never fails; every
/// problem is collected into the report.
pub fn validate_suite(records: &[TestCaseRecord], faults: &FaultMatrix) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for r in records {
        *counts.entry(r.id.as_str()).or_default() += 1;
        if r.exec_time < 0.0 || r.exec_time.is_nan() {
            report.errors.push(ValidationError::NegativeTime {
                id: r.id.clone(),
                time: r.exec_time,
            });
        }
        if !r.detects.is_empty() && !r.label {
            report
                .warnings
                .push(ValidationWarning::LabelMismatch(r.id.clone()));
        }
    }
    for (id, c) in counts {
        if c > 1 {
            report.errors.push(ValidationError::DuplicateId(id.to_string()));
        }
    }

    let ids: HashSet<&str> = records.iter().map(|r| r.id.as_str()).collect();
    let m = faults.m();
    for (id, row) in faults.rows() {
        if row.len() != m {
            report.errors.push(ValidationError::WidthMismatch {
                test: id.to_string(),
                expected: m,
                found: row.len(),
            });
        }
        if !ids.contains(id) {
            report.errors.push(ValidationError::UnknownRow(id.to_string()));
        }
    }
    for (j, fault) in faults.faults().iter().enumerate() {
        let detected = faults
            .rows()
            .any(|(_, row)| row.get(j).copied().unwrap_or(false));
        if !detected {
            report
                .warnings
                .push(ValidationWarning::UndetectableFault(fault.clone()));
        }
    }
    report
}
