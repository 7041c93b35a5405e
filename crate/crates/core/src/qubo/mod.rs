//! QUBO models for test selection.
//!
//! The selection objective over inclusion bits `x_i` is
//!
//! ```text
//! H(x) = −Σ p_i·x_i + λ_t·Σ t_i·x_i + λ_r·Σ_{i<j} o_ij·x_i·x_j
//! ```
//!
//! where `p_i` is the predicted fault-detection probability, `t_i` the
//! normalized execution time and `o_ij` the coverage overlap between tests.

mod decompose;

pub use decompose::{decompose, merge_solutions, Decomposition, MergeResult, SubProblem};

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::model::TestCaseRecord;

/// Stored quadratic entries smaller than this in magnitude are dropped.
pub const PRUNE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QuboError {
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("value out of range: {0}")]
    OutOfRange(String),
    #[error("max_vars must be >= 1")]
    InvalidMaxVars,
    #[error("sub-problems do not partition the original variables: {0}")]
    Partition(String),
    #[error("malformed QUBO file: {0}")]
    Malformed(String),
}

/// `energy(x) = offset + Σ linear_i·x_i + Σ_{i<j} quadratic_ij·x_i·x_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuboModel {
    linear: Vec<f64>,
    quadratic: BTreeMap<(usize, usize), f64>,
    offset: f64,
    var_ids: Vec<String>,
}

impl QuboModel {
    pub fn new(n: usize) -> Self {
        Self {
            linear: vec![0.0; n],
            quadratic: BTreeMap::new(),
            offset: 0.0,
            var_ids: (0..n).map(|i| format!("x{i}")).collect(),
        }
    }

    pub fn with_var_ids(mut self, ids: Vec<String>) -> Result<Self, QuboError> {
        if ids.len() != self.n() {
            return Err(QuboError::LengthMismatch(format!(
                "{} var ids for {} variables",
                ids.len(),
                self.n()
            )));
        }
        self.var_ids = ids;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.linear.len()
    }

    pub fn linear(&self) -> &[f64] {
        &self.linear
    }

    pub fn quadratic(&self) -> &BTreeMap<(usize, usize), f64> {
        &self.quadratic
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn var_ids(&self) -> &[String] {
        &self.var_ids
    }

    pub fn set_offset(&mut self, offset: f64) {
        self.offset = offset;
    }

    pub fn add_linear(&mut self, i: usize, v: f64) {
        self.linear[i] += v;
    }

    /// Adds to the coupling between `i` and `j` (order irrelevant, `i != j`).
    pub fn add_quadratic(&mut self, i: usize, j: usize, v: f64) {
        assert!(i != j, "diagonal terms belong in linear");
        assert!(i < self.n() && j < self.n(), "variable index out of range");
        let key = (i.min(j), i.max(j));
        let entry = self.quadratic.entry(key).or_insert(0.0);
        *entry += v;
        if entry.abs() < PRUNE_EPS {
            self.quadratic.remove(&key);
        }
    }

    /// Energy of `bits`; callers guarantee `bits.len() == n`.
    pub fn evaluate(&self, bits: &[bool]) -> f64 {
        let mut e = self.offset;
        for (i, &b) in bits.iter().enumerate() {
            if b {
                e += self.linear[i];
            }
        }
        for (&(i, j), &q) in &self.quadratic {
            if bits[i] && bits[j] {
                e += q;
            }
        }
        e
    }

    /// Neighbour lists `(j, Q_ij)` for every variable.
    pub fn adjacency(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.n()];
        for (&(i, j), &q) in &self.quadratic {
            adj[i].push((j, q));
            adj[j].push((i, q));
        }
        adj
    }

    pub fn to_file(&self) -> QuboFile {
        QuboFile {
            n: self.n(),
            var_ids: self.var_ids.clone(),
            linear: self.linear.clone(),
            quadratic: self.quadratic.iter().map(|(&(i, j), &v)| (i, j, v)).collect(),
            offset: self.offset,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_file()).expect("QUBO is always serializable")
    }

    pub fn from_json(text: &str) -> Result<Self, QuboError> {
        let file: QuboFile =
            serde_json::from_str(text).map_err(|e| QuboError::Malformed(e.to_string()))?;
        Self::from_file(file)
    }

    pub fn from_file(file: QuboFile) -> Result<Self, QuboError> {
        if file.linear.len() != file.n || file.var_ids.len() != file.n {
            return Err(QuboError::Malformed(format!(
                "n = {} but {} linear terms and {} var ids",
                file.n,
                file.linear.len(),
                file.var_ids.len()
            )));
        }
        let mut model = QuboModel {
            linear: file.linear,
            quadratic: BTreeMap::new(),
            offset: file.offset,
            var_ids: file.var_ids,
        };
        for (i, j, v) in file.quadratic {
            if i >= j || j >= file.n {
                return Err(QuboError::Malformed(format!("bad quadratic key ({i}, {j})")));
            }
            model.add_quadratic(i, j, v);
        }
        Ok(model)
    }
}

/// Wire format: `{n, var_ids, linear, quadratic: [[i, j, v], ...], offset}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuboFile {
    pub n: usize,
    pub var_ids: Vec<String>,
    pub linear: Vec<f64>,
    pub quadratic: Vec<(usize, usize, f64)>,
    pub offset: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlapKind {
    #[default]
    Jaccard,
    RawIntersectionNormalized,
}

impl std::str::FromStr for OverlapKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "jaccard" => Ok(OverlapKind::Jaccard),
            "raw_intersection_normalized" => Ok(OverlapKind::RawIntersectionNormalized),
            other => Err(format!("unknown overlap kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuboConfig {
    pub lambda_r: f64,
    pub lambda_t: f64,
    /// Upper bound on tests taken per round and on sub-problem size;
    /// `None` means `min(n, 25)`.
    pub batch_size: Option<usize>,
    pub overlap_kind: OverlapKind,
}

impl Default for QuboConfig {
    fn default() -> Self {
        Self {
            lambda_r: 0.5,
            lambda_t: 0.3,
            batch_size: None,
            overlap_kind: OverlapKind::Jaccard,
        }
    }
}

impl QuboConfig {
    pub const DEFAULT_BATCH: usize = 25;

    pub fn batch_size_for(&self, n: usize) -> usize {
        self.batch_size.unwrap_or(Self::DEFAULT_BATCH.min(n)).max(1)
    }

    pub fn validate(&self) -> Result<(), QuboError> {
        if !(self.lambda_r >= 0.0) || !(self.lambda_t >= 0.0) {
            return Err(QuboError::OutOfRange("lambda weights must be >= 0".into()));
        }
        if self.batch_size == Some(0) {
            return Err(QuboError::OutOfRange("batch_size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Symmetric coverage-overlap matrix with zero diagonal, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapMatrix {
    n: usize,
    data: Vec<f64>,
}

impl OverlapMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    /// Sets `o_ij = o_ji = v`; diagonal writes are ignored.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        if i != j {
            self.data[i * self.n + j] = v;
            self.data[j * self.n + i] = v;
        }
    }

    /// Sub-matrix over `idx`, in that order.
    pub fn restrict(&self, idx: &[usize]) -> Self {
        let mut out = Self::zeros(idx.len());
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                out.data[a * idx.len() + b] = self.get(i, j);
            }
        }
        out
    }
}

fn intersection_len(a: &[u32], b: &[u32]) -> usize {
    let (mut i, mut j, mut c) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                c += 1;
                i += 1;
                j += 1;
            }
        }
    }
    c
}

/// Pairwise coverage overlap. Jaccard is 0 when both sets are empty; the
/// normalized intersection divides by the largest coverage set in the suite.
pub fn overlap_matrix(records: &[TestCaseRecord], kind: OverlapKind) -> OverlapMatrix {
    let mut interner: HashMap<&str, u32> = HashMap::new();
    let sets: Vec<Vec<u32>> = records
        .iter()
        .map(|r| {
            let mut v: Vec<u32> = r
                .coverage
                .iter()
                .map(|c| {
                    let next = interner.len() as u32;
                    *interner.entry(c.as_str()).or_insert(next)
                })
                .collect();
            v.sort_unstable();
            v
        })
        .collect();
    let max_size = sets.iter().map(Vec::len).max().unwrap_or(0);
    let n = records.len();
    let mut m = OverlapMatrix::zeros(n);
    for i in 0..n {
        for j in i + 1..n {
            let inter = intersection_len(&sets[i], &sets[j]);
            let v = match kind {
                OverlapKind::Jaccard => {
                    let union = sets[i].len() + sets[j].len() - inter;
                    if union == 0 {
                        0.0
                    } else {
                        inter as f64 / union as f64
                    }
                }
                OverlapKind::RawIntersectionNormalized => {
                    if max_size == 0 {
                        0.0
                    } else {
                        inter as f64 / max_size as f64
                    }
                }
            };
            m.set(i, j, v);
        }
    }
    m
}

/// Compiles the selection objective into a QUBO.
pub fn build_selection_qubo(
    p: &[f64],
    t: &[f64],
    overlap: &OverlapMatrix,
    config: &QuboConfig,
) -> Result<QuboModel, QuboError> {
    let n = p.len();
    if t.len() != n || overlap.n() != n {
        return Err(QuboError::LengthMismatch(format!(
            "p has {n} entries, t {}, overlap {}",
            t.len(),
            overlap.n()
        )));
    }
    config.validate()?;
    let unit = |v: f64| (0.0..=1.0).contains(&v);
    if let Some(i) = (0..n).find(|&i| !unit(p[i]) || !unit(t[i])) {
        return Err(QuboError::OutOfRange(format!(
            "p[{i}] = {}, t[{i}] = {} must lie in [0, 1]",
            p[i], t[i]
        )));
    }
    let mut model = QuboModel::new(n);
    for i in 0..n {
        model.add_linear(i, -p[i] + config.lambda_t * t[i]);
    }
    if config.lambda_r > 0.0 {
        for i in 0..n {
            for j in i + 1..n {
                let o = overlap.get(i, j);
                if o != 0.0 {
                    model.add_quadratic(i, j, config.lambda_r * o);
                }
            }
        }
    }
    Ok(model)
}

/// Variables whose linear term and every coupling are nonnegative can be
/// fixed to 0 in some minimizer. Returns the model over the remaining
/// variables and their original indices.
pub fn fix_nonnegative_vars(model: &QuboModel) -> (QuboModel, Vec<usize>) {
    let n = model.n();
    let mut fixable: Vec<bool> = model.linear.iter().map(|&l| l >= 0.0).collect();
    for (&(i, j), &q) in &model.quadratic {
        if q < 0.0 {
            fixable[i] = false;
            fixable[j] = false;
        }
    }
    let kept: Vec<usize> = (0..n).filter(|&i| !fixable[i]).collect();
    let mut pos = vec![usize::MAX; n];
    for (k, &i) in kept.iter().enumerate() {
        pos[i] = k;
    }
    let mut reduced = QuboModel {
        linear: kept.iter().map(|&i| model.linear[i]).collect(),
        quadratic: BTreeMap::new(),
        offset: model.offset,
        var_ids: kept.iter().map(|&i| model.var_ids[i].clone()).collect(),
    };
    for (&(i, j), &q) in &model.quadratic {
        if pos[i] != usize::MAX && pos[j] != usize::MAX {
            reduced.quadratic.insert((pos[i], pos[j]), q);
        }
    }
    (reduced, kept)
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::*;
    use crate::model::FeatureVector;

    fn rec(cov: &[&str]) -> TestCaseRecord {
        TestCaseRecord::new(
            "t",
            FeatureVector::new(),
            cov.iter().map(|s| s.to_string()).collect(),
            1.0,
            BTreeSet::new(),
        )
    }

    #[test]
    fn overlap_examples() {
        let recs = [rec(&["a", "b"]), rec(&["b", "c"]), rec(&["x"]), rec(&["a", "b"]), rec(&[]), rec(&[])];
        let o = overlap_matrix(&recs, OverlapKind::Jaccard);
        assert!((o.get(0, 1) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(o.get(0, 2), 0.0);
        assert_eq!(o.get(0, 3), 1.0);
        assert_eq!(o.get(4, 5), 0.0);
        assert_eq!(o.get(1, 1), 0.0);
        let raw = overlap_matrix(&recs, OverlapKind::RawIntersectionNormalized);
        assert_eq!(raw.get(0, 1), 0.5);
        assert_eq!(raw.get(0, 3), 1.0);
    }

    #[test]
    fn single_test_linear_only() {
        let m = build_selection_qubo(&[1.0], &[0.0], &OverlapMatrix::zeros(1), &QuboConfig::default()).unwrap();
        assert_eq!(m.linear(), &[-1.0]);
        assert!(m.quadratic().is_empty());
        assert_eq!(m.evaluate(&[true]), -1.0);
    }

    #[test]
    fn duplicate_pair_energies() {
        let mut o = OverlapMatrix::zeros(2);
        o.set(0, 1, 1.0);
        let cfg = QuboConfig { lambda_r: 1.0, ..Default::default() };
        let m = build_selection_qubo(&[0.9, 0.9], &[0.0, 0.0], &o, &cfg).unwrap();
        assert_eq!(m.evaluate(&[false, false]), 0.0);
        assert_eq!(m.evaluate(&[true, false]), -0.9);
        assert!((m.evaluate(&[true, true]) - -0.8).abs() < 1e-12);
    }

    #[test]
    fn length_mismatch() {
        let err = build_selection_qubo(&[0.5, 0.5], &[0.0], &OverlapMatrix::zeros(2), &QuboConfig::default());
        assert!(matches!(err, Err(QuboError::LengthMismatch(_))));
    }

    #[test]
    fn probability_out_of_range() {
        let err = build_selection_qubo(&[1.5], &[0.0], &OverlapMatrix::zeros(1), &QuboConfig::default());
        assert!(matches!(err, Err(QuboError::OutOfRange(_))));
    }

    #[test]
    fn tiny_couplings_pruned() {
        let mut m = QuboModel::new(3);
        m.add_quadratic(2, 0, 1e-13);
        assert!(m.quadratic().is_empty());
        m.add_quadratic(2, 0, 0.5);
        m.add_quadratic(0, 2, -0.5);
        assert!(m.quadratic().is_empty());
        m.add_quadratic(2, 1, 0.25);
        assert_eq!(m.quadratic().keys().copied().collect::<Vec<_>>(), vec![(1, 2)]);
    }

    #[test]
    fn zero_assignment_energy_is_offset() {
        let mut m = QuboModel::new(4);
        m.set_offset(2.5);
        m.add_linear(1, -3.0);
        m.add_quadratic(0, 3, 1.0);
        assert_eq!(m.evaluate(&[false; 4]), 2.5);
    }

    #[test]
    fn json_round_trip() {
        let mut m = QuboModel::new(3).with_var_ids(vec!["a".into(), "b".into(), "c".into()]).unwrap();
        m.add_linear(0, -0.1);
        m.add_linear(2, 0.7);
        m.add_quadratic(0, 2, 0.3);
        m.set_offset(-1.25);
        let json = m.to_json();
        assert!(json.contains("\"quadratic\":[[0,2,0.3]]"), "{json}");
        assert_eq!(QuboModel::from_json(&json).unwrap(), m);
    }

    #[test]
    fn malformed_file_rejected() {
        let bad = r#"{"n":2,"var_ids":["a","b"],"linear":[0.0,0.0],"quadratic":[[1,0,1.0]],"offset":0.0}"#;
        assert!(QuboModel::from_json(bad).is_err());
        let bad = r#"{"n":3,"var_ids":["a","b"],"linear":[0.0,0.0],"quadratic":[],"offset":0.0}"#;
        assert!(QuboModel::from_json(bad).is_err());
    }

    #[test]
    fn nonnegative_vars_fixed() {
        let mut m = QuboModel::new(4);
        m.add_linear(0, -1.0);
        m.add_linear(1, 0.5);
        m.add_linear(2, 0.5);
        m.add_linear(3, 0.0);
        m.add_quadratic(1, 2, -1.0);
        m.add_quadratic(0, 3, 2.0);
        let (reduced, kept) = fix_nonnegative_vars(&m);
        assert_eq!(kept, vec![0, 1, 2]);
        assert_eq!(reduced.quadratic().get(&(1, 2)), Some(&-1.0));
        assert_eq!(reduced.linear(), &[-1.0, 0.5, 0.5]);
    }
}
