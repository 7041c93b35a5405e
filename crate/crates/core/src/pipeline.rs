//! In-process CI simulation: a stream of builds over an evolving synthetic
//! code base, each prioritized and evaluated under every policy, with the
//! forest retrained on all revealed labels every few builds.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::anneal::Solver;
use crate::bench::bench_hyper;
use crate::clock::ClockKind;
use crate::evaluate::{evaluate_ordering, paired_significance, EvalError, MetricsRecord, OverheadLedger};
use crate::ingest::{Dataset, IngestError, NormalizationParams, SyntheticConfig, SyntheticWorld};
use crate::learner::{train_forest, Forest, HyperParams, LearnError, Samples};
use crate::model::{Policy, Suite};
use crate::prioritize::{run_policy, GreedyKey, PolicyConfig, PrioritizeError};
use crate::qubo::QuboConfig;

/// Tests never drop below this count through removals.
const MIN_TESTS: usize = 10;
/// Features left undrifted; execution time is measured, not estimated.
const UNDRIFTED: [&str; 1] = ["exec_time"];

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid pipeline config: {0}")]
    Config(String),
    #[error("drift check needs at least 10 builds, log has {0}")]
    InsufficientBuilds(usize),
    #[error("log has no `{0}` metrics")]
    MissingPolicy(Policy),
    #[error("build {build}: {source}")]
    Build {
        build: usize,
        source: Box<PipelineError>,
    },
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Prioritize(#[from] PrioritizeError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("log I/O on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed log line {line}: {message}")]
    Log { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub n_builds: usize,
    pub retrain_every: usize,
    pub retrain_enabled: bool,
    /// Standard deviation of the per-build log-scale drift applied to
    /// feature scales and element churn.
    pub drift: f64,
    /// Upper bound on tests added and on tests removed per build.
    pub max_test_churn: usize,
    pub synthetic: SyntheticConfig,
    /// Labeled builds available before build 1 to train the first forest.
    pub warmup_builds: usize,
    pub hyper: HyperParams,
    pub policies: Vec<Policy>,
    pub greedy_key: GreedyKey,
    pub qubo: QuboConfig,
    pub solver: Solver,
    pub clock: ClockKind,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            n_builds: 15,
            retrain_every: 5,
            retrain_enabled: true,
            drift: 0.05,
            max_test_churn: 3,
            synthetic: SyntheticConfig {
                n_tests: 60,
                n_faults: 15,
                ..Default::default()
            },
            warmup_builds: 3,
            hyper: bench_hyper(),
            policies: Policy::ALL.to_vec(),
            greedy_key: GreedyKey::CoverageDesc,
            qubo: QuboConfig::default(),
            solver: Solver::default(),
            clock: ClockKind::Monotonic,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::Config(m.to_string()));
        if self.n_builds == 0 {
            return bad("n_builds must be >= 1");
        }
        if self.retrain_every == 0 {
            return bad("retrain_every must be >= 1");
        }
        if self.warmup_builds == 0 {
            return bad("warmup_builds must be >= 1");
        }
        if !(self.drift >= 0.0) {
            return bad("drift must be >= 0");
        }
        if self.policies.is_empty() {
            return bad("at least one policy is required");
        }
        self.synthetic.validate()?;
        Ok(())
    }

    pub fn is_retrain_build(&self, build: usize) -> bool {
        self.retrain_enabled && build.is_multiple_of(self.retrain_every)
    }
}

/// One line of the pipeline log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildRecord {
    pub build_number: usize,
    pub commit_id: String,
    pub seed: u64,
    pub n_tests: usize,
    pub added: Vec<String>,
    pub removed: Vec<String>,
    /// The forest was retrained after this build's results came in.
    pub retrain: bool,
    /// Version of the forest that prioritized this build.
    pub forest_version: usize,
    pub metrics: Vec<MetricsRecord>,
    /// Faults in this build per code class.
    pub class_faults: BTreeMap<String, usize>,
    /// Sum of the per-policy ledgers.
    pub ledger: OverheadLedger,
}

struct State {
    world: SyntheticWorld,
    rng: ChaCha8Rng,
    feature_scale: BTreeMap<String, f64>,
    history: Vec<Suite>,
    params: NormalizationParams,
    forest: Forest,
    forest_version: usize,
}

fn train(history: &[Suite], hyper: &HyperParams, seed: u64) -> Result<(NormalizationParams, Forest), PipelineError> {
    let raw = Dataset::from_suites(history.to_vec());
    let params = NormalizationParams::fit(&raw)?;
    let samples = Samples::from_dataset(&params.apply(&raw)?)?;
    let forest = train_forest(&samples, hyper, seed)?;
    Ok((params, forest))
}

impl State {
    fn new(config: &PipelineConfig) -> Result<Self, PipelineError> {
        let mut synthetic = config.synthetic.clone();
        synthetic.seed = config.seed;
        let world = SyntheticWorld::new(synthetic)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x00C1_B01D);
        let feature_scale = Dataset::from_suites(vec![])
            .feature_names
            .into_iter()
            .map(|n| (n, 1.0))
            .collect();
        let mut state = Self {
            world,
            rng: rng.clone(),
            feature_scale,
            history: Vec::new(),
            params: NormalizationParams {
                ranges: Default::default(),
            },
            forest: Forest {
                trees: vec![],
                hyper: config.hyper,
                feature_names: vec![],
                seed: 0,
            },
            forest_version: 0,
        };
        for w in 0..config.warmup_builds {
            let suite = state.world.draw_suite(format!("warmup-{w}"), &mut rng);
            state.history.push(suite);
        }
        state.rng = rng;
        let (params, forest) = train(&state.history, &config.hyper, config.seed)?;
        state.params = params;
        state.forest = forest;
        Ok(state)
    }

    /// Adds/removes tests and drifts the world. Returns (added, removed).
    fn mutate(&mut self, config: &PipelineConfig) -> (Vec<String>, Vec<String>) {
        let n_remove = self.rng.random_range(0..=config.max_test_churn);
        let n_add = self.rng.random_range(0..=config.max_test_churn);
        let mut removed = Vec::new();
        for _ in 0..n_remove {
            if self.world.tests.len() <= MIN_TESTS {
                break;
            }
            let id = self.world.tests.choose(&mut self.rng).expect("nonempty").id.clone();
            self.world.remove_test(&id);
            removed.push(id);
        }
        let added = (0..n_add).map(|_| self.world.add_test(&mut self.rng)).collect();
        self.world.evolve(&mut self.rng, config.drift);
        if config.drift > 0.0 {
            let step = Normal::new(0.0, config.drift).expect("finite sigma");
            for (name, scale) in &mut self.feature_scale {
                if !UNDRIFTED.contains(&name.as_str()) {
                    *scale *= step.sample(&mut self.rng).exp();
                }
            }
        }
        (added, removed)
    }

    fn draw(&mut self, build: usize) -> Suite {
        let mut suite = self.world.draw_suite(format!("build-{build:04}"), &mut self.rng);
        for r in &mut suite.records {
            for (name, &scale) in &self.feature_scale {
                if let Some(Some(v)) = r.features.get(name) {
                    r.features.set(name, Some(v * scale));
                }
            }
        }
        suite
    }
}

fn class_faults(suite: &Suite) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for f in suite.faults.faults() {
        let class = f.split('/').next().unwrap_or(f).to_string();
        *out.entry(class).or_insert(0) += 1;
    }
    out
}

fn evaluate_build(
    config: &PipelineConfig,
    state: &State,
    raw: &Suite,
    build_seed: u64,
) -> Result<(Vec<MetricsRecord>, OverheadLedger), PipelineError> {
    let eval = state
        .params
        .apply(&Dataset::from_suites(vec![raw.clone()]))?
        .suites
        .pop()
        .expect("one suite in, one out");
    let mut metrics = Vec::with_capacity(config.policies.len());
    let mut parts = [0.0; 6];
    for &policy in &config.policies {
        let mut pc = PolicyConfig {
            policy,
            greedy_key: config.greedy_key,
            qubo: config.qubo,
            solver: config.solver,
            seed: build_seed,
        };
        pc.solver.schedule.seed = build_seed;
        let clock = config.clock.make();
        let out = run_policy(&eval, Some(&state.forest), &pc, clock.as_ref())?;
        for (acc, (_, v)) in parts.iter_mut().zip(out.ledger.components()) {
            *acc += v;
        }
        metrics.push(evaluate_ordering(&out.ordering, &eval, out.ledger, build_seed)?);
    }
    let ledger = OverheadLedger::new(parts[0], parts[1], parts[2], parts[3], parts[4], parts[5]);
    Ok((metrics, ledger))
}

/// Runs builds `1..=n_builds`, calling `sink` for every build after
/// `skip`. Skipped builds still advance the simulation state, so a resumed
/// run continues exactly where the original would have.
pub fn run_simulation_with(
    config: &PipelineConfig,
    skip: usize,
    mut sink: impl FnMut(BuildRecord) -> Result<(), PipelineError>,
) -> Result<(), PipelineError> {
    config.validate()?;
    let mut state = State::new(config)?;
    for build in 1..=config.n_builds {
        let wrap = |e: PipelineError| PipelineError::Build {
            build,
            source: Box::new(e),
        };
        let (added, removed) = if build > 1 {
            state.mutate(config)
        } else {
            (Vec::new(), Vec::new())
        };
        let commit_id = format!("{:016x}", state.rng.random::<u64>());
        let raw = state.draw(build);
        let build_seed = config.seed.wrapping_add(build as u64);
        let forest_version = state.forest_version;
        let retrain = config.is_retrain_build(build);
        if build > skip {
            let (metrics, ledger) = evaluate_build(config, &state, &raw, build_seed).map_err(wrap)?;
            sink(BuildRecord {
                build_number: build,
                commit_id,
                seed: build_seed,
                n_tests: raw.len(),
                added,
                removed,
                retrain,
                forest_version,
                metrics,
                class_faults: class_faults(&raw),
                ledger,
            })?;
        }
        state.history.push(raw);
        if retrain {
            let (params, forest) =
                train(&state.history, &config.hyper, config.seed.wrapping_add(build as u64)).map_err(wrap)?;
            state.params = params;
            state.forest = forest;
            state.forest_version += 1;
        }
    }
    Ok(())
}

pub fn run_simulation(config: &PipelineConfig) -> Result<Vec<BuildRecord>, PipelineError> {
    let mut log = Vec::with_capacity(config.n_builds);
    run_simulation_with(config, 0, |r| {
        log.push(r);
        Ok(())
    })?;
    Ok(log)
}

pub fn to_json_line(record: &BuildRecord) -> String {
    serde_json::to_string(record).expect("build record is always serializable")
}

pub fn read_log(path: &Path) -> Result<Vec<BuildRecord>, PipelineError> {
    let io = |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::open(path).map_err(io)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| PipelineError::Log {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Appends builds to the JSON-lines log at `path`, resuming after the last
/// complete line. A trailing partial line is discarded.
pub fn run_simulation_to_file(config: &PipelineConfig, path: &Path) -> Result<usize, PipelineError> {
    let io = |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut done = 0;
    if path.exists() {
        let text = std::fs::read_to_string(path).map_err(io)?;
        let mut keep = 0;
        for line in text.split_inclusive('\n') {
            if !line.ends_with('\n') || serde_json::from_str::<BuildRecord>(line.trim_end()).is_err() {
                break;
            }
            keep += line.len();
            done += 1;
        }
        if keep < text.len() {
            std::fs::write(path, &text[..keep]).map_err(io)?;
        }
    }
    let mut file = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
    let mut written = 0;
    run_simulation_with(config, done, |r| {
        writeln!(file, "{}", to_json_line(&r)).map_err(io)?;
        written += 1;
        Ok(())
    })?;
    Ok(written)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub window: usize,
    pub early_mean: f64,
    pub late_mean: f64,
    pub delta: f64,
    pub p_value: f64,
}

/// Compares quantum-enhanced APFD over the first and the last
/// `retrain_every`-sized windows of builds.
pub fn drift_check(log: &[BuildRecord]) -> Result<DriftReport, PipelineError> {
    const WINDOW: usize = 5;
    if log.len() < 2 * WINDOW {
        return Err(PipelineError::InsufficientBuilds(log.len()));
    }
    let apfd = |r: &BuildRecord| {
        r.metrics
            .iter()
            .find(|m| m.policy == Policy::QuantumEnhanced)
            .map(|m| m.apfd)
            .ok_or(PipelineError::MissingPolicy(Policy::QuantumEnhanced))
    };
    let early = log[..WINDOW].iter().map(apfd).collect::<Result<Vec<_>, _>>()?;
    let late = log[log.len() - WINDOW..].iter().map(apfd).collect::<Result<Vec<_>, _>>()?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (early_mean, late_mean) = (mean(&early), mean(&late));
    Ok(DriftReport {
        window: WINDOW,
        early_mean,
        late_mean,
        delta: late_mean - early_mean,
        p_value: paired_significance(&late, &early)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anneal::AnnealSchedule;
    use crate::model::validate_suite;

    pub(crate) fn quick(n_builds: usize) -> PipelineConfig {
        PipelineConfig {
            n_builds,
            synthetic: SyntheticConfig {
                n_tests: 25,
                n_faults: 6,
                ..Default::default()
            },
            hyper: HyperParams { n_trees: 10, ..bench_hyper() },
            solver: Solver {
                schedule: AnnealSchedule { sweeps: 60, restarts: 2, ..Default::default() },
                ..Default::default()
            },
            clock: ClockKind::Virtual(1e-3),
            seed: 7,
            ..Default::default()
        }
    }

    #[test]
    fn four_builds_never_retrain() {
        let log = run_simulation(&quick(4)).unwrap();
        assert_eq!(log.len(), 4);
        assert!(log.iter().all(|b| !b.retrain && b.forest_version == 0));
    }

    #[test]
    fn forest_version_follows_retrains() {
        let log = run_simulation(&quick(11)).unwrap();
        let versions: Vec<usize> = log.iter().map(|b| b.forest_version).collect();
        assert_eq!(versions, [0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 2]);
    }

    #[test]
    fn retrain_disabled() {
        let cfg = PipelineConfig { retrain_enabled: false, ..quick(6) };
        assert!(run_simulation(&cfg).unwrap().iter().all(|b| !b.retrain));
    }

    #[test]
    fn drawn_suites_stay_valid() {
        let cfg = quick(8);
        let mut state = State::new(&cfg).unwrap();
        for b in 1..=8 {
            state.mutate(&cfg);
            let s = state.draw(b);
            assert!(validate_suite(&s.records, &s.faults).is_valid());
            assert!(s.len() >= MIN_TESTS);
        }
    }

    #[test]
    fn drift_check_needs_ten_builds() {
        let log = run_simulation(&quick(5)).unwrap();
        assert!(matches!(drift_check(&log), Err(PipelineError::InsufficientBuilds(5))));
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        let dir = tempfile::tempdir().unwrap();
        let full = dir.path().join("full.jsonl");
        let part = dir.path().join("part.jsonl");
        run_simulation_to_file(&quick(6), &full).unwrap();
        run_simulation_to_file(&quick(3), &part).unwrap();
        let mut text = std::fs::read_to_string(&part).unwrap();
        text.push_str("{\"build_number\": 4, \"trunc");
        std::fs::write(&part, text).unwrap();
        assert_eq!(run_simulation_to_file(&quick(6), &part).unwrap(), 3);
        assert_eq!(std::fs::read(&full).unwrap(), std::fs::read(&part).unwrap());
    }

    #[test]
    fn class_fault_counts_add_up() {
        let log = run_simulation(&quick(2)).unwrap();
        for b in &log {
            let m = b.metrics[0].m;
            assert_eq!(b.class_faults.values().sum::<usize>(), m);
        }
    }
}
