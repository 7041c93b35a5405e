//! Policy comparison on synthetic suites.
//!
//! Each case builds one synthetic world, draws a few labeled historical
//! builds to train the forest on, then draws a fresh fault set and orders it
//! with every policy.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anneal::Solver;
use crate::clock::ClockKind;
use crate::evaluate::{evaluate_ordering, EvalError, MetricsRecord};
use crate::ingest::{Dataset, IngestError, NormalizationParams, SyntheticConfig, SyntheticWorld};
use crate::learner::{train_forest, FeaturesPerSplit, HyperParams, LearnError, Samples};
use crate::model::{Policy, Suite, SuiteCategory};
use crate::prioritize::{run_policy, GreedyKey, PolicyConfig, PrioritizeError};
use crate::qubo::QuboConfig;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Prioritize(#[from] PrioritizeError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("case n={n_tests} seed={seed}: {source}")]
    Case {
        n_tests: usize,
        seed: u64,
        source: Box<BenchError>,
    },
}

/// Representative suite size for each category.
pub fn size_for(category: SuiteCategory) -> usize {
    match category {
        SuiteCategory::Small => 40,
        SuiteCategory::Medium => 80,
        SuiteCategory::Large => 150,
    }
}

/// Forest settings used when no grid search is run.
pub fn bench_hyper() -> HyperParams {
    HyperParams {
        n_trees: 100,
        max_depth: Some(8),
        min_samples_leaf: 3,
        features_per_split: FeaturesPerSplit::Sqrt,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    pub n_tests: usize,
    /// Defaults to a quarter of `n_tests`.
    pub n_faults: Option<usize>,
    pub redundancy: f64,
    /// Labeled builds drawn for training before the evaluated one.
    pub history_draws: usize,
    pub hyper: HyperParams,
    pub policies: Vec<Policy>,
    pub greedy_key: GreedyKey,
    pub qubo: QuboConfig,
    pub solver: Solver,
    pub clock: ClockKind,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            n_tests: 100,
            n_faults: None,
            redundancy: 0.3,
            history_draws: 3,
            hyper: bench_hyper(),
            policies: Policy::ALL.to_vec(),
            greedy_key: GreedyKey::CoverageDesc,
            qubo: QuboConfig::default(),
            solver: Solver::default(),
            clock: ClockKind::Monotonic,
        }
    }
}

impl BenchConfig {
    pub fn synthetic(&self, seed: u64) -> SyntheticConfig {
        SyntheticConfig {
            n_tests: self.n_tests,
            n_faults: self.n_faults.unwrap_or((self.n_tests / 4).max(1)),
            redundancy: self.redundancy,
            seed,
            ..Default::default()
        }
    }
}

/// Training data and the evaluated build for one `(config, seed)` case.
pub struct BenchCase {
    pub train: Dataset,
    pub eval: Suite,
}

pub fn prepare_case(config: &BenchConfig, seed: u64) -> Result<BenchCase, BenchError> {
    let world = SyntheticWorld::new(config.synthetic(seed))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xB3_7C_4A_11);
    let history: Vec<Suite> = (0..config.history_draws)
        .map(|b| world.draw_suite(format!("history-{seed}-{b}"), &mut rng))
        .collect();
    let eval = world.draw_suite(format!("bench-n{}-s{seed}", config.n_tests), &mut rng);
    let params = NormalizationParams::fit(&Dataset::from_suites(history.clone()))?;
    let train = params.apply(&Dataset::from_suites(history))?;
    let eval = params
        .apply(&Dataset::from_suites(vec![eval]))?
        .suites
        .pop()
        .expect("one suite in, one out");
    Ok(BenchCase { train, eval })
}

/// Evaluates every configured policy on one seeded case.
pub fn bench_case(config: &BenchConfig, seed: u64) -> Result<Vec<MetricsRecord>, BenchError> {
    let case = prepare_case(config, seed)?;
    let forest = train_forest(&Samples::from_dataset(&case.train)?, &config.hyper, seed)?;
    config
        .policies
        .iter()
        .map(|&policy| {
            let mut pc = PolicyConfig {
                policy,
                greedy_key: config.greedy_key,
                qubo: config.qubo,
                solver: config.solver,
                seed,
            };
            pc.solver.schedule.seed = seed;
            let clock = config.clock.make();
            let out = run_policy(&case.eval, Some(&forest), &pc, clock.as_ref())?;
            Ok(evaluate_ordering(&out.ordering, &case.eval, out.ledger, seed)?)
        })
        .collect()
}

/// All cases, in `(n_tests, seed)` order regardless of scheduling.
pub fn run_bench(configs: &[BenchConfig], seeds: &[u64]) -> Result<Vec<MetricsRecord>, BenchError> {
    let cases: Vec<(&BenchConfig, u64)> = configs
        .iter()
        .flat_map(|c| seeds.iter().map(move |&s| (c, s)))
        .collect();
    let results: Vec<Result<Vec<MetricsRecord>, BenchError>> = cases
        .par_iter()
        .map(|&(c, s)| {
            bench_case(c, s).map_err(|e| BenchError::Case {
                n_tests: c.n_tests,
                seed: s,
                source: Box::new(e),
            })
        })
        .collect();
    let mut out = Vec::new();
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anneal::AnnealSchedule;

    fn quick() -> BenchConfig {
        BenchConfig {
            n_tests: 30,
            hyper: HyperParams { n_trees: 10, ..bench_hyper() },
            solver: Solver {
                schedule: AnnealSchedule { sweeps: 100, restarts: 2, ..Default::default() },
                ..Default::default()
            },
            clock: ClockKind::Virtual(1e-3),
            ..Default::default()
        }
    }

    #[test]
    fn one_record_per_policy() {
        let rows = bench_case(&quick(), 1).unwrap();
        let policies: Vec<Policy> = rows.iter().map(|r| r.policy).collect();
        assert_eq!(policies, Policy::ALL.to_vec());
        assert!(rows.iter().all(|r| r.n == 30 && r.apfd > 0.0 && r.apfd <= 1.0));
    }

    #[test]
    fn deterministic_with_virtual_clock() {
        let a = run_bench(&[quick()], &[3, 4]).unwrap();
        let b = run_bench(&[quick()], &[3, 4]).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 8);
    }

    #[test]
    fn category_sizes() {
        for c in SuiteCategory::ALL {
            assert_eq!(crate::model::categorize_suite(size_for(c)), c);
        }
    }
}
