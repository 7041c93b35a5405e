//! Effectiveness and cost metrics for orderings.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{FaultMatrix, Ordering, Policy, Suite, SuiteCategory, TestCaseRecord};

pub const PERMUTATIONS: usize = 10_000;
const PERMUTATION_SEED: u64 = 0x5EED_0F_7E57;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("no detectable faults")]
    NoFaults,
    #[error("paired samples differ in length: {a} vs {b}")]
    LengthMismatch { a: usize, b: usize },
    #[error("need at least 5 pairs, got {0}")]
    TooFewPairs(usize),
    #[error("test `{0}` is in the fault matrix but not in the ordering")]
    UnknownTest(String),
    #[error("no metrics to aggregate")]
    Empty,
    #[error("writing metrics failed: {0}")]
    Io(String),
}

/// Seconds spent in each stage of producing an ordering.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct OverheadLedger {
    pub feature_extraction: f64,
    pub prediction: f64,
    pub qubo_build: f64,
    pub serialize_transfer: f64,
    pub solve: f64,
    pub parse_order: f64,
    pub total: f64,
}

impl OverheadLedger {
    pub const COMPONENTS: [&'static str; 6] = [
        "feature_extraction",
        "prediction",
        "qubo_build",
        "serialize_transfer",
        "solve",
        "parse_order",
    ];

    pub fn new(
        feature_extraction: f64,
        prediction: f64,
        qubo_build: f64,
        serialize_transfer: f64,
        solve: f64,
        parse_order: f64,
    ) -> Self {
        let mut l = Self {
            feature_extraction,
            prediction,
            qubo_build,
            serialize_transfer,
            solve,
            parse_order,
            total: 0.0,
        };
        l.total = l.components().iter().map(|(_, v)| v).sum();
        l
    }

    pub fn components(&self) -> [(&'static str, f64); 6] {
        [
            ("feature_extraction", self.feature_extraction),
            ("prediction", self.prediction),
            ("qubo_build", self.qubo_build),
            ("serialize_transfer", self.serialize_transfer),
            ("solve", self.solve),
            ("parse_order", self.parse_order),
        ]
    }

    pub fn is_consistent(&self) -> bool {
        let sum: f64 = self.components().iter().map(|(_, v)| v).sum();
        (sum - self.total).abs() <= 1e-9
    }
}

/// TF_j: 1-based position of the first test detecting each fault, in the
/// fault matrix's column order.
pub fn first_detections(ordering: &Ordering, faults: &FaultMatrix) -> Result<Vec<usize>, EvalError> {
    let pos: HashMap<&str, usize> = ordering
        .sequence()
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i + 1))
        .collect();
    let mut tf = vec![usize::MAX; faults.m()];
    for (id, row) in faults.rows() {
        if !row.iter().any(|&d| d) {
            continue;
        }
        let p = *pos.get(id).ok_or_else(|| EvalError::UnknownTest(id.to_string()))?;
        for (j, &d) in row.iter().enumerate() {
            if d {
                tf[j] = tf[j].min(p);
            }
        }
    }
    Ok(tf)
}

/// `APFD = 1 − ΣTF_j/(n·m) + 1/(2n)`.
pub fn apfd(ordering: &Ordering, faults: &FaultMatrix) -> Result<(f64, Vec<usize>), EvalError> {
    if faults.m() == 0 {
        return Err(EvalError::NoFaults);
    }
    let tf = first_detections(ordering, faults)?;
    let n = ordering.len() as f64;
    let m = faults.m() as f64;
    let sum: usize = tf.iter().sum();
    Ok((1.0 - sum as f64 / (n * m) + 1.0 / (2.0 * n), tf))
}

/// Execution time until every detectable fault has been exposed, running
/// the sequence in order. Without faults the whole sequence runs.
pub fn tet(ordering: &Ordering, faults: &FaultMatrix, records: &[TestCaseRecord]) -> f64 {
    let times: HashMap<&str, f64> = records.iter().map(|r| (r.id.as_str(), r.exec_time)).collect();
    let mut remaining: Vec<bool> = vec![true; faults.m()];
    let mut left = faults.m();
    let mut total = 0.0;
    for id in ordering.sequence() {
        if left == 0 && faults.m() > 0 {
            break;
        }
        total += times.get(id.as_str()).copied().unwrap_or(0.0);
        if let Some(row) = faults.row(id) {
            for (j, &d) in row.iter().enumerate() {
                if d && remaining[j] {
                    remaining[j] = false;
                    left -= 1;
                }
            }
        }
    }
    total
}

/// Two-sided paired permutation test on the mean difference, using a fixed
/// internal seed. `p = (count + 1) / (PERMUTATIONS + 1)`.
pub fn paired_significance(a: &[f64], b: &[f64]) -> Result<f64, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch { a: a.len(), b: b.len() });
    }
    if a.len() < 5 {
        return Err(EvalError::TooFewPairs(a.len()));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len() as f64;
    let observed = (d.iter().sum::<f64>() / n).abs();
    let tol = 1e-12 * observed.max(1e-300);
    let mut rng = ChaCha8Rng::seed_from_u64(PERMUTATION_SEED);
    let mut count = 0usize;
    for _ in 0..PERMUTATIONS {
        let s: f64 = d
            .iter()
            .map(|&x| if rng.random_bool(0.5) { x } else { -x })
            .sum();
        if (s / n).abs() >= observed - tol {
            count += 1;
        }
    }
    Ok((count + 1) as f64 / (PERMUTATIONS + 1) as f64)
}

/// One evaluated ordering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub policy: Policy,
    pub suite_id: String,
    pub category: SuiteCategory,
    pub seed: u64,
    pub n: usize,
    pub m: usize,
    pub apfd: f64,
    pub tet: f64,
    pub overhead: OverheadLedger,
    pub tf: Vec<usize>,
}

pub fn evaluate_ordering(
    ordering: &Ordering,
    suite: &Suite,
    overhead: OverheadLedger,
    seed: u64,
) -> Result<MetricsRecord, EvalError> {
    let (apfd, tf) = apfd(ordering, &suite.faults)?;
    Ok(MetricsRecord {
        policy: ordering.policy(),
        suite_id: suite.id.clone(),
        category: suite.category(),
        seed,
        n: ordering.len(),
        m: suite.faults.m(),
        apfd,
        tet: tet(ordering, &suite.faults, &suite.records),
        overhead,
        tf,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub policy: Policy,
    pub category: SuiteCategory,
    pub count: usize,
    pub apfd_mean: f64,
    pub apfd_std: f64,
    pub tet_mean: f64,
    pub overhead_mean: f64,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Population standard deviation.
pub fn pop_std(v: &[f64]) -> f64 {
    let mu = mean(v);
    (v.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / v.len() as f64).sqrt()
}

/// Means and population standard deviations per `(policy, category)`,
/// ordered by policy then category.
pub fn aggregate(metrics: &[MetricsRecord]) -> Result<Vec<AggregateRow>, EvalError> {
    if metrics.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut groups: BTreeMap<(Policy, SuiteCategory), Vec<&MetricsRecord>> = BTreeMap::new();
    for r in metrics {
        groups.entry((r.policy, r.category)).or_default().push(r);
    }
    Ok(groups
        .into_iter()
        .map(|((policy, category), rs)| {
            let apfds: Vec<f64> = rs.iter().map(|r| r.apfd).collect();
            let tets: Vec<f64> = rs.iter().map(|r| r.tet).collect();
            let overheads: Vec<f64> = rs.iter().map(|r| r.overhead.total).collect();
            AggregateRow {
                policy,
                category,
                count: rs.len(),
                apfd_mean: mean(&apfds),
                apfd_std: pop_std(&apfds),
                tet_mean: mean(&tets),
                overhead_mean: mean(&overheads),
            }
        })
        .collect())
}

pub const METRICS_COLUMNS: [&str; 15] = [
    "policy",
    "suite_id",
    "category",
    "seed",
    "n",
    "m",
    "apfd",
    "tet",
    "overhead_total",
    "overhead_solve",
    "overhead_feature_extraction",
    "overhead_prediction",
    "overhead_qubo_build",
    "overhead_serialize_transfer",
    "overhead_parse_order",
];

/// Writes one CSV row per record; APFD is a fraction, times in seconds.
pub fn write_metrics_csv<W: Write>(writer: W, metrics: &[MetricsRecord]) -> Result<(), EvalError> {
    let io = |e: csv::Error| EvalError::Io(e.to_string());
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(METRICS_COLUMNS).map_err(io)?;
    for r in metrics {
        let o = &r.overhead;
        w.write_record([
            r.policy.as_str().to_string(),
            r.suite_id.clone(),
            r.category.as_str().to_string(),
            r.seed.to_string(),
            r.n.to_string(),
            r.m.to_string(),
            r.apfd.to_string(),
            r.tet.to_string(),
            o.total.to_string(),
            o.solve.to_string(),
            o.feature_extraction.to_string(),
            o.prediction.to_string(),
            o.qubo_build.to_string(),
            o.serialize_transfer.to_string(),
            o.parse_order.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| EvalError::Io(e.to_string()))
}
