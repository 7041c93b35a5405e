//! The four ordering policies.
//!
//! `quantum_enhanced` builds the order in rounds. Each round compiles the
//! remaining tests into a selection QUBO, with overlap against tests already
//! scheduled folded into the linear terms, solves it, and appends the chosen
//! batch sorted by predicted probability.

use std::cmp::Ordering as Cmp;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::anneal::{AnnealError, Solver};
use crate::clock::{time_dyn, Clock, MonotonicClock};
use crate::evaluate::OverheadLedger;
use crate::learner::{Forest, LearnError};
use crate::model::{Ordering, Policy, Suite, TestCaseRecord, ValidationError};
use crate::qubo::{
    build_selection_qubo, decompose, fix_nonnegative_vars, merge_solutions, overlap_matrix, QuboConfig,
    QuboError,
};

#[derive(Debug, thiserror::Error)]
pub enum PrioritizeError {
    #[error("suite has no tests")]
    EmptySuite,
    #[error("policy `{0}` needs a trained forest")]
    MissingForest(Policy),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Qubo(#[from] QuboError),
    #[error(transparent)]
    Anneal(#[from] AnnealError),
    #[error(transparent)]
    Validation(#[from] ValidationError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GreedyKey {
    #[default]
    CoverageDesc,
    TimeAsc,
}

impl std::str::FromStr for GreedyKey {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "coverage_desc" => Ok(GreedyKey::CoverageDesc),
            "time_asc" => Ok(GreedyKey::TimeAsc),
            other => Err(format!("unknown greedy key `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicyConfig {
    pub policy: Policy,
    pub greedy_key: GreedyKey,
    pub qubo: QuboConfig,
    pub solver: Solver,
    pub seed: u64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            policy: Policy::QuantumEnhanced,
            greedy_key: GreedyKey::CoverageDesc,
            qubo: QuboConfig::default(),
            solver: Solver::default(),
            seed: 0,
        }
    }
}

/// An ordering with the time spent producing it.
#[derive(Debug, Clone, PartialEq)]
pub struct Prioritized {
    pub ordering: Ordering,
    pub ledger: OverheadLedger,
    /// Number of selection rounds; zero for non-QUBO policies.
    pub rounds: usize,
}

fn ids_of(suite: &Suite, idx: impl IntoIterator<Item = usize>) -> Vec<String> {
    idx.into_iter().map(|i| suite.records[i].id.clone()).collect()
}

fn nonempty(suite: &Suite) -> Result<(), PrioritizeError> {
    if suite.is_empty() {
        Err(PrioritizeError::EmptySuite)
    } else {
        Ok(())
    }
}

pub fn prioritize_random(suite: &Suite, seed: u64) -> Result<Ordering, PrioritizeError> {
    nonempty(suite)?;
    let mut idx: Vec<usize> = (0..suite.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(Ordering::all_selected(Policy::Random, ids_of(suite, idx))?)
}

pub fn prioritize_greedy(suite: &Suite, key: GreedyKey) -> Result<Ordering, PrioritizeError> {
    nonempty(suite)?;
    let r = &suite.records;
    let mut idx: Vec<usize> = (0..r.len()).collect();
    idx.sort_by(|&a, &b| {
        let (ra, rb) = (&r[a], &r[b]);
        let by_cov = rb.coverage.len().cmp(&ra.coverage.len());
        let by_time = ra.exec_time.total_cmp(&rb.exec_time);
        match key {
            GreedyKey::CoverageDesc => by_cov.then(by_time),
            GreedyKey::TimeAsc => by_time.then(by_cov),
        }
        .then_with(|| ra.id.cmp(&rb.id))
    });
    Ok(Ordering::all_selected(Policy::Greedy, ids_of(suite, idx))?)
}

/// Probability descending, then execution time ascending, then id.
fn by_probability<'a>(p: &'a [f64], records: &'a [TestCaseRecord]) -> impl Fn(&usize, &usize) -> Cmp + 'a {
    move |&a, &b| {
        p[b].total_cmp(&p[a])
            .then(records[a].exec_time.total_cmp(&records[b].exec_time))
            .then_with(|| records[a].id.cmp(&records[b].id))
    }
}

fn feature_rows(suite: &Suite, forest: &Forest) -> Result<Vec<Vec<f64>>, LearnError> {
    suite
        .records
        .iter()
        .map(|r| {
            r.features.dense(&forest.feature_names).ok_or_else(|| {
                LearnError::FeatureMismatch(format!("record `{}` lacks a forest feature", r.id))
            })
        })
        .collect()
}

fn predict(suite: &Suite, forest: &Forest, clock: &dyn Clock) -> Result<(Vec<f64>, f64, f64), LearnError> {
    let (rows, fe) = time_dyn(clock, || feature_rows(suite, forest));
    let rows = rows?;
    let (p, pred) = time_dyn(clock, || rows.iter().map(|r| forest.predict_row(r)).collect::<Vec<_>>());
    Ok((p, fe, pred))
}

pub fn prioritize_ml_only(suite: &Suite, forest: &Forest) -> Result<Ordering, PrioritizeError> {
    Ok(ml_only_timed(suite, forest, &MonotonicClock::new())?.ordering)
}

fn ml_only_timed(suite: &Suite, forest: &Forest, clock: &dyn Clock) -> Result<Prioritized, PrioritizeError> {
    nonempty(suite)?;
    let (p, fe, pred) = predict(suite, forest, clock)?;
    let (idx, parse) = time_dyn(clock, || {
        let mut idx: Vec<usize> = (0..suite.len()).collect();
        idx.sort_by(by_probability(&p, &suite.records));
        idx
    });
    Ok(Prioritized {
        ordering: Ordering::all_selected(Policy::MlOnly, ids_of(suite, idx))?,
        ledger: OverheadLedger::new(fe, pred, 0.0, 0.0, 0.0, parse),
        rounds: 0,
    })
}

pub fn prioritize_quantum(suite: &Suite, forest: &Forest, config: &PolicyConfig) -> Result<Ordering, PrioritizeError> {
    Ok(quantum_timed(suite, forest, config, &MonotonicClock::new())?.ordering)
}

/// Min-max scaling of `values`; a constant vector maps to zeros.
fn min_max(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    values
        .iter()
        .map(|&v| if hi > lo { (v - lo) / (hi - lo) } else { 0.0 })
        .collect()
}

struct Round {
    chosen: Vec<usize>,
    qubo_build: f64,
    serialize: f64,
    solve: f64,
    parse: f64,
}

/// One selection round over `remaining` (suite indices). Returns the chosen
/// suite indices, unsorted.
fn select_round(
    suite: &Suite,
    p: &[f64],
    overlap: &crate::qubo::OverlapMatrix,
    penalty: &[f64],
    remaining: &[usize],
    config: &PolicyConfig,
    round: usize,
    clock: &dyn Clock,
) -> Result<Round, PrioritizeError> {
    let t0 = clock.now();
    let pr: Vec<f64> = remaining.iter().map(|&i| p[i]).collect();
    let times: Vec<f64> = remaining.iter().map(|&i| suite.records[i].exec_time).collect();
    let tr = min_max(&times);
    let or = overlap.restrict(remaining);
    let mut model = build_selection_qubo(&pr, &tr, &or, &config.qubo)?
        .with_var_ids(ids_of(suite, remaining.iter().copied()))?;
    for (k, &i) in remaining.iter().enumerate() {
        if penalty[i] != 0.0 {
            model.add_linear(k, config.qubo.lambda_r * penalty[i]);
        }
    }
    let (reduced, kept) = fix_nonnegative_vars(&model);
    let batch = config.qubo.batch_size_for(suite.len());
    let max_vars = config.solver.kind.capacity().map_or(batch, |c| c.min(batch));
    let parts = decompose(&reduced, max_vars)?;
    let qubo_build = clock.now() - t0;

    let mut serialize = 0.0;
    let mut solve = 0.0;
    let mut solutions = Vec::with_capacity(parts.subs.len());
    for (s, sub) in parts.subs.iter().enumerate() {
        let mut solver = config.solver;
        solver.schedule.seed = config
            .solver
            .schedule
            .seed
            .wrapping_add((round as u64) << 24)
            .wrapping_add(s as u64);
        let res = solver.solve_with_clock(&sub.model, clock)?;
        serialize += res.serialize_time;
        solve += res.wall_time;
        solutions.push(res.assignment);
    }

    let t1 = clock.now();
    let pairs: Vec<_> = parts.subs.iter().zip(&solutions).collect();
    let merged = merge_solutions(&pairs, &reduced)?;
    let mut chosen: Vec<usize> = kept
        .iter()
        .zip(&merged.assignment)
        .filter(|(_, &b)| b)
        .map(|(&k, _)| remaining[k])
        .collect();
    if chosen.len() > batch {
        chosen.sort_by(by_probability(p, &suite.records));
        chosen.truncate(batch);
    }
    if chosen.is_empty() {
        let best = remaining
            .iter()
            .copied()
            .min_by(by_probability(p, &suite.records))
            .expect("remaining is nonempty");
        chosen.push(best);
    }
    let parse = clock.now() - t1;
    Ok(Round {
        chosen,
        qubo_build,
        serialize,
        solve,
        parse,
    })
}

fn quantum_timed(
    suite: &Suite,
    forest: &Forest,
    config: &PolicyConfig,
    clock: &dyn Clock,
) -> Result<Prioritized, PrioritizeError> {
    nonempty(suite)?;
    config.qubo.validate()?;
    config.solver.schedule.validate()?;
    let (p, fe, pred) = predict(suite, forest, clock)?;
    let (overlap, mut qubo_build) = time_dyn(clock, || overlap_matrix(&suite.records, config.qubo.overlap_kind));

    let n = suite.len();
    let mut penalty = vec![0.0; n];
    let mut placed = vec![false; n];
    let mut sequence: Vec<usize> = Vec::with_capacity(n);
    let mut n_selected = 0;
    let (mut serialize, mut solve, mut parse) = (0.0, 0.0, 0.0);
    let mut rounds = 0;
    while sequence.len() < n {
        let remaining: Vec<usize> = (0..n).filter(|&i| !placed[i]).collect();
        let r = select_round(suite, &p, &overlap, &penalty, &remaining, config, rounds, clock)?;
        qubo_build += r.qubo_build;
        serialize += r.serialize;
        solve += r.solve;
        let t = clock.now();
        let mut chosen = r.chosen;
        chosen.sort_by(by_probability(&p, &suite.records));
        for &c in &chosen {
            placed[c] = true;
            sequence.push(c);
        }
        for &i in &remaining {
            if !placed[i] {
                penalty[i] += chosen.iter().map(|&c| overlap.get(i, c)).sum::<f64>();
            }
        }
        if rounds == 0 {
            n_selected = chosen.len();
        }
        rounds += 1;
        parse += r.parse + (clock.now() - t);
    }
    Ok(Prioritized {
        ordering: Ordering::with_selected_prefix(Policy::QuantumEnhanced, ids_of(suite, sequence), n_selected)?,
        ledger: OverheadLedger::new(fe, pred, qubo_build, serialize, solve, parse),
        rounds,
    })
}

/// Runs the configured policy, timing each stage with `clock`.
pub fn run_policy(
    suite: &Suite,
    forest: Option<&Forest>,
    config: &PolicyConfig,
    clock: &dyn Clock,
) -> Result<Prioritized, PrioritizeError> {
    let need_forest = || forest.ok_or(PrioritizeError::MissingForest(config.policy));
    match config.policy {
        Policy::Random | Policy::Greedy => {
            let (ordering, parse) = time_dyn(clock, || match config.policy {
                Policy::Random => prioritize_random(suite, config.seed),
                _ => prioritize_greedy(suite, config.greedy_key),
            });
            Ok(Prioritized {
                ordering: ordering?,
                ledger: OverheadLedger::new(0.0, 0.0, 0.0, 0.0, 0.0, parse),
                rounds: 0,
            })
        }
        Policy::MlOnly => ml_only_timed(suite, need_forest()?, clock),
        Policy::QuantumEnhanced => quantum_timed(suite, need_forest()?, config, clock),
    }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::*;
    use crate::anneal::SolverKind;
    use crate::learner::{FeaturesPerSplit, HyperParams, TreeNode};
    use crate::model::FeatureVector;

    fn rec(id: &str, p: f64, cov: &[&str], time: f64) -> TestCaseRecord {
        TestCaseRecord::new(
            id,
            FeatureVector::from_pairs([("p", Some(p))]),
            cov.iter().map(|s| s.to_string()).collect(),
            time,
            BTreeSet::new(),
        )
    }

    /// A forest whose prediction is the `p` feature, up to 0.05 resolution.
    fn identity_forest() -> Forest {
        fn grow(lo: f64, hi: f64) -> TreeNode {
            if hi - lo <= 0.05 + 1e-12 {
                return TreeNode::Leaf {
                    positive_fraction: (lo + hi) / 2.0,
                    n_samples: 1,
                };
            }
            let mid = (lo + hi) / 2.0;
            TreeNode::Split {
                feature: 0,
                threshold: mid,
                n_samples: 2,
                impurity_decrease: 0.0,
                left: Box::new(grow(lo, mid)),
                right: Box::new(grow(mid, hi)),
            }
        }
        Forest {
            trees: vec![grow(0.0, 1.6)],
            hyper: HyperParams {
                n_trees: 1,
                max_depth: None,
                min_samples_leaf: 1,
                features_per_split: FeaturesPerSplit::All,
            },
            feature_names: vec!["p".into()],
            seed: 0,
        }
    }

    fn config(lambda_r: f64, lambda_t: f64) -> PolicyConfig {
        PolicyConfig {
            qubo: QuboConfig {
                lambda_r,
                lambda_t,
                ..Default::default()
            },
            solver: Solver::new(SolverKind::Exhaustive, Default::default()),
            ..Default::default()
        }
    }

    fn ids(o: &Ordering) -> Vec<&str> {
        o.sequence().iter().map(String::as_str).collect()
    }

    #[test]
    fn random_single_and_deterministic() {
        let s = Suite::from_records("s", vec![rec("a", 0.1, &[], 1.0)]);
        assert_eq!(ids(&prioritize_random(&s, 3).unwrap()), ["a"]);
        let s = Suite::from_records(
            "s",
            (0..8).map(|i| rec(&format!("t{i}"), 0.1, &[], 1.0)).collect(),
        );
        assert_eq!(prioritize_random(&s, 5).unwrap(), prioritize_random(&s, 5).unwrap());
    }

    #[test]
    fn empty_suite_rejected() {
        let s = Suite::from_records("s", vec![]);
        assert!(matches!(prioritize_random(&s, 0), Err(PrioritizeError::EmptySuite)));
        assert!(matches!(
            prioritize_greedy(&s, GreedyKey::TimeAsc),
            Err(PrioritizeError::EmptySuite)
        ));
    }

    #[test]
    fn greedy_examples() {
        let s = Suite::from_records(
            "s",
            vec![
                rec("t1", 0.0, &["a", "b", "c"], 5.0),
                rec("t2", 0.0, &["a"], 1.0),
                rec("t3", 0.0, &["a", "b"], 3.0),
            ],
        );
        assert_eq!(ids(&prioritize_greedy(&s, GreedyKey::CoverageDesc).unwrap()), ["t1", "t3", "t2"]);
        assert_eq!(ids(&prioritize_greedy(&s, GreedyKey::TimeAsc).unwrap()), ["t2", "t3", "t1"]);
        let tied = Suite::from_records(
            "s",
            vec![rec("c", 0.0, &["x"], 1.0), rec("a", 0.0, &["y"], 1.0), rec("b", 0.0, &["z"], 1.0)],
        );
        assert_eq!(ids(&prioritize_greedy(&tied, GreedyKey::CoverageDesc).unwrap()), ["a", "b", "c"]);
    }

    #[test]
    fn ml_only_orders_by_probability() {
        let s = Suite::from_records("s", vec![rec("lo", 0.1, &[], 1.0), rec("hi", 0.9, &[], 1.0)]);
        assert_eq!(ids(&prioritize_ml_only(&s, &identity_forest()).unwrap()), ["hi", "lo"]);
        let s = Suite::from_records(
            "s",
            vec![rec("b", 0.5, &[], 2.0), rec("c", 0.5, &[], 1.0), rec("a", 0.5, &[], 2.0)],
        );
        assert_eq!(ids(&prioritize_ml_only(&s, &identity_forest()).unwrap()), ["c", "a", "b"]);
    }

    #[test]
    fn ml_only_reports_missing_features() {
        let mut r = rec("a", 0.1, &[], 1.0);
        r.features = FeatureVector::from_pairs([("q", Some(0.1))]);
        let s = Suite::from_records("s", vec![r]);
        assert!(matches!(
            prioritize_ml_only(&s, &identity_forest()),
            Err(PrioritizeError::Learn(LearnError::FeatureMismatch(_)))
        ));
    }

    #[test]
    fn quantum_single_test() {
        let s = Suite::from_records("s", vec![rec("a", 0.5, &["x"], 1.0)]);
        let o = prioritize_quantum(&s, &identity_forest(), &config(0.5, 0.3)).unwrap();
        assert_eq!(ids(&o), ["a"]);
        assert_eq!(o.selected(), ["a".to_string()]);
    }

    #[test]
    fn duplicate_is_demoted() {
        let s = Suite::from_records(
            "s",
            vec![
                rec("a", 0.9, &["x", "y"], 1.0),
                rec("b", 0.9, &["x", "y"], 1.0),
                rec("c", 0.3, &["z"], 1.0),
            ],
        );
        let o = prioritize_quantum(&s, &identity_forest(), &config(1.0, 0.0)).unwrap();
        assert_eq!(ids(&o), ["b", "c", "a"]);
        assert_eq!(o.selected().len(), 2);
    }

    #[test]
    fn zero_overlap_zero_time_weight_matches_ml_only() {
        let records: Vec<TestCaseRecord> = (0..10)
            .map(|i| rec(&format!("t{i}"), (i * 7 % 10) as f64 / 10.0, &[&format!("e{i}")], 1.0 + i as f64))
            .collect();
        let s = Suite::from_records("s", records);
        let f = identity_forest();
        let q = prioritize_quantum(&s, &f, &config(0.5, 0.0)).unwrap();
        assert_eq!(q.sequence(), prioritize_ml_only(&s, &f).unwrap().sequence());
    }

    #[test]
    fn ledger_is_consistent() {
        let s = Suite::from_records(
            "s",
            (0..6).map(|i| rec(&format!("t{i}"), i as f64 / 6.0, &["a", &format!("e{i}")], 1.0)).collect(),
        );
        let clock = crate::clock::VirtualClock::default();
        let mut cfg = config(0.5, 0.3);
        cfg.solver.kind = SolverKind::RemoteStub;
        cfg.solver.schedule.sweeps = 50;
        let out = run_policy(&s, Some(&identity_forest()), &cfg, &clock).unwrap();
        assert!(out.ledger.is_consistent());
        assert!(out.ledger.serialize_transfer > 0.0);
        assert!(out.ordering.is_permutation_of(&s));
    }
}
