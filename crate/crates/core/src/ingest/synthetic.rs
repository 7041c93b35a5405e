//! Synthetic suites with Defects4J-like structure.
//!
//! A [`SyntheticWorld`] holds the latent state of a codebase: per-element
//! churn, the class each element belongs to, and each test's coverage,
//! mutation-kill strength and runtime. Every call to
//! [`SyntheticWorld::draw_suite`] places a fresh set of faults on covered
//! elements (weighted by `churn^fault_skew`) and derives the observable
//! features, so the same world can supply both training history and an
//! evaluation build.

use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal, Pareto};
use serde::{Deserialize, Serialize};

use super::IngestError;
use crate::model::{FeatureVector, Suite, TestCaseRecord, FEATURE_NAMES};

const DETECTION_RETRIES: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_tests: usize,
    pub n_faults: usize,
    pub n_code_elements: usize,
    /// Probability that a covered element comes from the test's home class.
    /// Higher values raise the mean pairwise coverage overlap.
    pub redundancy: f64,
    pub fault_skew: f64,
    /// Pareto shape of element churn.
    pub churn_alpha: f64,
    pub elements_per_class: usize,
    /// Inclusive bounds on the number of elements a test covers.
    pub coverage_size: (usize, usize),
    /// Uniform range of per-test mutation kill probability.
    pub kill_score_range: (f64, f64),
    /// Relative measurement noise on derived features.
    pub feature_noise: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_tests: 100,
            n_faults: 25,
            n_code_elements: 200,
            redundancy: 0.3,
            fault_skew: 1.5,
            churn_alpha: 2.0,
            elements_per_class: 12,
            coverage_size: (3, 12),
            kill_score_range: (0.2, 0.95),
            feature_noise: 0.1,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<(), IngestError> {
        let err = |m: &str| Err(IngestError::Config(m.to_string()));
        if self.n_tests == 0 || self.n_faults == 0 || self.n_code_elements == 0 {
            return err("n_tests, n_faults and n_code_elements must be >= 1");
        }
        if !(0.0..=1.0).contains(&self.redundancy) {
            return err("redundancy must lie in [0, 1]");
        }
        if !(self.fault_skew > 0.0) || !(self.churn_alpha > 0.0) {
            return err("fault_skew and churn_alpha must be > 0");
        }
        if self.elements_per_class == 0 {
            return err("elements_per_class must be >= 1");
        }
        let (lo, hi) = self.coverage_size;
        if lo == 0 || lo > hi {
            return err("coverage_size must satisfy 1 <= lo <= hi");
        }
        let (klo, khi) = self.kill_score_range;
        if !(0.0..=1.0).contains(&klo) || !(0.0..=1.0).contains(&khi) || klo > khi {
            return err("kill_score_range must be an ordered sub-range of [0, 1]");
        }
        if !(self.feature_noise >= 0.0) {
            return err("feature_noise must be >= 0");
        }
        Ok(())
    }
}

/// Latent description of one test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestProfile {
    pub id: String,
    pub home_class: usize,
    /// Sorted element indices.
    pub coverage: Vec<usize>,
    pub kill: f64,
    pub exec_time: f64,
    pub complexity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticWorld {
    pub config: SyntheticConfig,
    pub churn: Vec<f64>,
    pub element_class: Vec<usize>,
    pub tests: Vec<TestProfile>,
    next_test: usize,
}

fn class_name(c: usize) -> String {
    format!("C{c:02}")
}

impl SyntheticWorld {
    pub fn new(config: SyntheticConfig) -> Result<Self, IngestError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let pareto = Pareto::new(1.0, config.churn_alpha).expect("validated alpha");
        let churn = (0..config.n_code_elements)
            .map(|_| pareto.sample(&mut rng))
            .collect();
        let element_class = (0..config.n_code_elements)
            .map(|e| e / config.elements_per_class)
            .collect();
        let mut world = Self {
            config,
            churn,
            element_class,
            tests: Vec::new(),
            next_test: 0,
        };
        for _ in 0..world.config.n_tests {
            world.add_test(&mut rng);
        }
        Ok(world)
    }

    pub fn n_classes(&self) -> usize {
        self.element_class.last().map_or(0, |c| c + 1)
    }

    pub fn element_name(&self, e: usize) -> String {
        format!("{}.e{e:03}", class_name(self.element_class[e]))
    }

    /// Adds a freshly generated test and returns its id.
    pub fn add_test<R: Rng>(&mut self, rng: &mut R) -> String {
        let cfg = &self.config;
        let n_el = cfg.n_code_elements;
        let home = rng.random_range(0..self.n_classes());
        let class_members: Vec<usize> = (0..n_el).filter(|&e| self.element_class[e] == home).collect();
        let (lo, hi) = cfg.coverage_size;
        let want = rng.random_range(lo..=hi).min(n_el);
        let mut cov = BTreeSet::new();
        let mut attempts = 0;
        while cov.len() < want && attempts < 50 * want {
            attempts += 1;
            let e = if rng.random_bool(cfg.redundancy) {
                *class_members.choose(rng).expect("class nonempty")
            } else {
                rng.random_range(0..n_el)
            };
            cov.insert(e);
        }
        let size = cov.len() as f64;
        let (klo, khi) = cfg.kill_score_range;
        let kill = if khi > klo { rng.random_range(klo..=khi) } else { klo };
        let speed = LogNormal::new(0.0, 0.5).expect("valid").sample(rng);
        let exec_time = 0.1 + size * rng.random_range(0.05..0.25) * speed;
        let complexity = 1.0 + size * rng.random_range(0.5..2.5);
        let id = format!("T{:04}", self.next_test);
        self.next_test += 1;
        self.tests.push(TestProfile {
            id: id.clone(),
            home_class: home,
            coverage: cov.into_iter().collect(),
            kill,
            exec_time,
            complexity,
        });
        id
    }

    pub fn remove_test(&mut self, id: &str) -> bool {
        let before = self.tests.len();
        self.tests.retain(|t| t.id != id);
        self.tests.len() != before
    }

    /// Multiplicative random walk on element churn.
    pub fn evolve<R: Rng>(&mut self, rng: &mut R, magnitude: f64) {
        if magnitude <= 0.0 {
            return;
        }
        let step = Normal::new(0.0, magnitude).expect("finite sigma");
        for c in &mut self.churn {
            *c = (*c * step.sample(rng).exp()).max(1e-6);
        }
    }

    fn observed_features<R: Rng>(&self, t: &TestProfile, rng: &mut R) -> FeatureVector {
        let cfg = &self.config;
        let noise = Normal::new(0.0, cfg.feature_noise.max(1e-12)).expect("finite sigma");
        let mut jitter = |x: f64| x * (1.0 + noise.sample(rng)).max(0.0);
        let size = t.coverage.len() as f64;
        let mean_churn = if t.coverage.is_empty() {
            0.0
        } else {
            t.coverage.iter().map(|&e| self.churn[e]).sum::<f64>() / size
        };
        let classes: BTreeSet<usize> = t.coverage.iter().map(|&e| self.element_class[e]).collect();
        let line_cov = (size / cfg.coverage_size.1 as f64).min(1.0);
        let values = [
            jitter(t.complexity),
            jitter(mean_churn),
            jitter(classes.len() as f64),
            t.exec_time,
            jitter(line_cov).clamp(0.0, 1.0),
            (jitter(line_cov) * rng.random_range(0.5..=1.0)).clamp(0.0, 1.0),
            (t.kill + noise.sample(rng) * 0.5).clamp(0.0, 1.0),
        ];
        FeatureVector::from_pairs(FEATURE_NAMES.iter().zip(values).map(|(n, v)| (*n, Some(v))))
    }

    /// Places `n_faults` new faults and returns the resulting suite.
    pub fn draw_suite<R: Rng>(&self, suite_id: impl Into<String>, rng: &mut R) -> Suite {
        let cfg = &self.config;
        let covered: Vec<usize> = self
            .tests
            .iter()
            .flat_map(|t| t.coverage.iter().copied())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let weights: Vec<f64> = covered
            .iter()
            .map(|&e| self.churn[e].powf(cfg.fault_skew))
            .collect();
        let total: f64 = weights.iter().sum();

        let mut detects: Vec<BTreeSet<String>> = vec![BTreeSet::new(); self.tests.len()];
        if !covered.is_empty() {
            for f in 0..cfg.n_faults {
                let mut u = rng.random::<f64>() * total;
                let mut pick = covered.len() - 1;
                for (i, w) in weights.iter().enumerate() {
                    if u < *w {
                        pick = i;
                        break;
                    }
                    u -= w;
                }
                let element = covered[pick];
                let fault_id = format!("{}/F{f:03}", class_name(self.element_class[element]));
                let coverers: Vec<usize> = (0..self.tests.len())
                    .filter(|&i| self.tests[i].coverage.binary_search(&element).is_ok())
                    .collect();
                let mut hit = Vec::new();
                for _ in 0..DETECTION_RETRIES {
                    hit = coverers
                        .iter()
                        .copied()
                        .filter(|&i| rng.random_bool(self.tests[i].kill))
                        .collect();
                    if !hit.is_empty() {
                        break;
                    }
                }
                if hit.is_empty() {
                    let best = coverers
                        .iter()
                        .copied()
                        .max_by(|&a, &b| self.tests[a].kill.total_cmp(&self.tests[b].kill))
                        .expect("fault placed on a covered element");
                    hit.push(best);
                }
                for i in hit {
                    detects[i].insert(fault_id.clone());
                }
            }
        }

        let records = self
            .tests
            .iter()
            .zip(detects)
            .map(|(t, det)| {
                let coverage = t.coverage.iter().map(|&e| self.element_name(e)).collect();
                TestCaseRecord::new(
                    t.id.clone(),
                    self.observed_features(t, rng),
                    coverage,
                    t.exec_time,
                    det,
                )
            })
            .collect();
        Suite::from_records(suite_id, records)
    }
}

/// One-shot generation: a world seeded by `config.seed` and a single fault
/// draw from the same stream.
pub fn generate_synthetic_suite(config: &SyntheticConfig) -> Result<Suite, IngestError> {
    let world = SyntheticWorld::new(config.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9E37_79B9_7F4A_7C15);
    Ok(world.draw_suite(format!("synthetic-{}", config.seed), &mut rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_suite;

    fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
        let union = a.union(b).count();
        if union == 0 {
            0.0
        } else {
            a.intersection(b).count() as f64 / union as f64
        }
    }

    fn mean_pairwise_jaccard(suite: &Suite) -> f64 {
        let r = &suite.records;
        let mut sum = 0.0;
        let mut pairs = 0;
        for i in 0..r.len() {
            for j in i + 1..r.len() {
                sum += jaccard(&r[i].coverage, &r[j].coverage);
                pairs += 1;
            }
        }
        sum / pairs as f64
    }

    #[test]
    fn single_test_forced_detection() {
        let cfg = SyntheticConfig {
            n_tests: 1,
            n_faults: 1,
            redundancy: 0.0,
            kill_score_range: (1.0, 1.0),
            ..Default::default()
        };
        let suite = generate_synthetic_suite(&cfg).unwrap();
        assert_eq!(suite.len(), 1);
        assert_eq!(suite.faults.m(), 1);
        assert_eq!(suite.faults.row(&suite.records[0].id), Some(&[true][..]));
        assert!(suite.records[0].label);
    }

    #[test]
    fn same_seed_is_byte_identical() {
        let cfg = SyntheticConfig { seed: 17, ..Default::default() };
        let a = generate_synthetic_suite(&cfg).unwrap();
        let b = generate_synthetic_suite(&cfg).unwrap();
        let enc = |s: &Suite| {
            let mut buf = Vec::new();
            super::super::write_csv(&mut buf, &s.records).unwrap();
            buf
        };
        assert_eq!(enc(&a), enc(&b));
    }

    #[test]
    fn redundancy_raises_overlap() {
        let at = |r: f64| {
            let cfg = SyntheticConfig { n_tests: 100, redundancy: r, seed: 5, ..Default::default() };
            mean_pairwise_jaccard(&generate_synthetic_suite(&cfg).unwrap())
        };
        let (high, low) = (at(0.8), at(0.0));
        assert!(high > low, "high={high} low={low}");
    }

    #[test]
    fn every_fault_is_detectable() {
        for seed in 0..20 {
            let cfg = SyntheticConfig { seed, n_tests: 30, n_faults: 15, ..Default::default() };
            let suite = generate_synthetic_suite(&cfg).unwrap();
            assert_eq!(suite.faults.dropped_undetectable(), 0);
            let report = validate_suite(&suite.records, &suite.faults);
            assert!(report.is_valid() && report.warnings.is_empty(), "{report:?}");
            for j in 0..suite.faults.m() {
                assert!(suite.faults.rows().any(|(_, row)| row[j]));
            }
        }
    }

    #[test]
    fn churn_correlates_with_label() {
        let mut total = 0.0;
        for seed in 0..10 {
            let suite = generate_synthetic_suite(&SyntheticConfig { seed, ..Default::default() }).unwrap();
            let xs: Vec<f64> = suite.records.iter().map(|r| r.features.get("code_churn").flatten().unwrap()).collect();
            let ys: Vec<f64> = suite.records.iter().map(|r| r.label as u8 as f64).collect();
            total += pearson(&xs, &ys);
        }
        assert!(total / 10.0 > 0.0);
    }

    fn pearson(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let mx = x.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
        let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
        cov / (vx * vy).sqrt()
    }

    #[test]
    fn config_violations_rejected() {
        let bad = SyntheticConfig { n_tests: 0, ..Default::default() };
        assert!(matches!(generate_synthetic_suite(&bad), Err(IngestError::Config(_))));
        let bad = SyntheticConfig { redundancy: 1.5, ..Default::default() };
        assert!(generate_synthetic_suite(&bad).is_err());
    }

    #[test]
    fn features_in_unit_range_where_required() {
        let suite = generate_synthetic_suite(&SyntheticConfig::default()).unwrap();
        for r in &suite.records {
            for name in ["line_coverage", "branch_coverage", "mutation_kill_score"] {
                let v = r.features.get(name).flatten().unwrap();
                assert!((0.0..=1.0).contains(&v));
            }
            assert_eq!(r.features.get("exec_time").flatten(), Some(r.exec_time));
        }
    }
}
