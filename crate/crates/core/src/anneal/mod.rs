//! Minimizers for [`QuboModel`]s: simulated annealing, exhaustive search
//! and a stand-in for a remote sampler that pays the serialization cost.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clock::{time_dyn, Clock, MonotonicClock};
use crate::qubo::QuboModel;

/// One bit per QUBO variable.
pub type Assignment = Vec<bool>;

pub const EXHAUSTIVE_MAX_VARS: usize = 20;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnnealError {
    #[error("assignment has {found} bits, model has {expected} variables")]
    LengthMismatch { expected: usize, found: usize },
    #[error("exhaustive search limited to {max} variables, got {n}")]
    TooLarge { n: usize, max: usize },
    #[error("unknown solver `{0}` (expected simulated_annealing, exhaustive or remote_stub)")]
    UnknownSolver(String),
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("transfer failed: {0}")]
    Transfer(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    #[default]
    SimulatedAnnealing,
    Exhaustive,
    RemoteStub,
}

impl SolverKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SolverKind::SimulatedAnnealing => "simulated_annealing",
            SolverKind::Exhaustive => "exhaustive",
            SolverKind::RemoteStub => "remote_stub",
        }
    }

    /// Largest model the solver accepts, if bounded.
    pub fn capacity(self) -> Option<usize> {
        match self {
            SolverKind::Exhaustive => Some(EXHAUSTIVE_MAX_VARS),
            _ => None,
        }
    }
}

impl std::str::FromStr for SolverKind {
    type Err = AnnealError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "simulated_annealing" | "sa" => Ok(SolverKind::SimulatedAnnealing),
            "exhaustive" => Ok(SolverKind::Exhaustive),
            "remote_stub" => Ok(SolverKind::RemoteStub),
            other => Err(AnnealError::UnknownSolver(other.to_string())),
        }
    }
}

impl std::fmt::Display for SolverKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Geometric temperature ladder from `t_start` to `t_end`, one rung per sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnealSchedule {
    pub t_start: f64,
    pub t_end: f64,
    pub sweeps: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for AnnealSchedule {
    fn default() -> Self {
        Self {
            t_start: 2.0,
            t_end: 0.01,
            sweeps: 2000,
            restarts: 8,
            seed: 0,
        }
    }
}

impl AnnealSchedule {
    pub fn validate(&self) -> Result<(), AnnealError> {
        if !(self.t_start > 0.0 && self.t_end > 0.0 && self.t_end <= self.t_start) {
            return Err(AnnealError::InvalidSchedule(format!(
                "need 0 < t_end <= t_start, got t_start = {}, t_end = {}",
                self.t_start, self.t_end
            )));
        }
        if self.sweeps == 0 || self.restarts == 0 {
            return Err(AnnealError::InvalidSchedule("sweeps and restarts must be >= 1".into()));
        }
        Ok(())
    }

    pub fn temperature(&self, sweep: usize) -> f64 {
        if self.sweeps == 1 {
            return self.t_start;
        }
        let frac = sweep as f64 / (self.sweeps - 1) as f64;
        self.t_start * (self.t_end / self.t_start).powf(frac)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub assignment: Assignment,
    /// Exact energy of `assignment`, re-evaluated after the search.
    pub energy: f64,
    pub solver: SolverKind,
    /// Search time, excluding `serialize_time`.
    pub wall_time: f64,
    /// Time spent encoding and decoding the model; zero for local solvers.
    pub serialize_time: f64,
    pub restarts_used: usize,
    /// Best energy reached by each restart.
    pub restart_energies: Vec<f64>,
}

pub fn energy(model: &QuboModel, x: &[bool]) -> Result<f64, AnnealError> {
    if x.len() != model.n() {
        return Err(AnnealError::LengthMismatch {
            expected: model.n(),
            found: x.len(),
        });
    }
    Ok(model.evaluate(x))
}

/// Incrementally maintained `field_i = linear_i + Σ_j Q_ij·x_j`, so that
/// flipping bit `i` changes the energy by `(1 − 2·x_i)·field_i`.
#[derive(Debug, Clone)]
pub struct LocalField<'a> {
    adj: &'a [Vec<(usize, f64)>],
    pub bits: Assignment,
    pub field: Vec<f64>,
    pub energy: f64,
}

impl<'a> LocalField<'a> {
    pub fn new(model: &QuboModel, adj: &'a [Vec<(usize, f64)>], bits: Assignment) -> Self {
        let field = (0..model.n())
            .map(|i| model.linear()[i] + adj[i].iter().filter(|(j, _)| bits[*j]).map(|(_, q)| q).sum::<f64>())
            .collect();
        let energy = model.evaluate(&bits);
        Self { adj, bits, field, energy }
    }

    pub fn delta(&self, i: usize) -> f64 {
        if self.bits[i] {
            -self.field[i]
        } else {
            self.field[i]
        }
    }

    pub fn flip(&mut self, i: usize) {
        self.energy += self.delta(i);
        self.bits[i] = !self.bits[i];
        let sign = if self.bits[i] { 1.0 } else { -1.0 };
        for &(j, q) in &self.adj[i] {
            self.field[j] += sign * q;
        }
    }
}

fn anneal_once(model: &QuboModel, adj: &[Vec<(usize, f64)>], schedule: &AnnealSchedule, seed: u64) -> (Assignment, f64) {
    let n = model.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start: Assignment = (0..n).map(|_| rng.random_bool(0.5)).collect();
    let mut state = LocalField::new(model, adj, start);
    let mut best = state.bits.clone();
    let mut best_energy = state.energy;
    let mut order: Vec<usize> = (0..n).collect();
    for sweep in 0..schedule.sweeps {
        let temp = schedule.temperature(sweep);
        order.shuffle(&mut rng);
        for &i in &order {
            let d = state.delta(i);
            if d <= 0.0 || rng.random::<f64>() < (-d / temp).exp() {
                state.flip(i);
                if state.energy < best_energy - 1e-12 {
                    best_energy = state.energy;
                    best.clone_from(&state.bits);
                }
            }
        }
    }
    let e = model.evaluate(&best);
    (best, e)
}

/// Simulated annealing with random-order single-bit flips. Restart `r` is
/// seeded with `seed + r`; the best restart wins, earlier index on ties.
pub fn solve_sa(model: &QuboModel, schedule: &AnnealSchedule) -> Result<SolveResult, AnnealError> {
    solve_sa_timed(model, schedule, &MonotonicClock::new())
}

/// [`solve_sa`] with `wall_time` read from `clock`.
pub fn solve_sa_timed(model: &QuboModel, schedule: &AnnealSchedule, clock: &dyn Clock) -> Result<SolveResult, AnnealError> {
    schedule.validate()?;
    let start = clock.now();
    let adj = model.adjacency();
    let runs: Vec<(Assignment, f64)> = (0..schedule.restarts)
        .into_par_iter()
        .map(|r| anneal_once(model, &adj, schedule, schedule.seed.wrapping_add(r as u64)))
        .collect();
    let mut best = 0;
    for (r, run) in runs.iter().enumerate() {
        if run.1 < runs[best].1 {
            best = r;
        }
    }
    let restart_energies = runs.iter().map(|r| r.1).collect();
    let (assignment, energy) = runs.into_iter().nth(best).expect("at least one restart");
    Ok(SolveResult {
        assignment,
        energy,
        solver: SolverKind::SimulatedAnnealing,
        wall_time: clock.now() - start,
        serialize_time: 0.0,
        restarts_used: schedule.restarts,
        restart_energies,
    })
}

fn lex_less(a: u32, b: u32) -> bool {
    let d = a ^ b;
    d != 0 && a & (1 << d.trailing_zeros()) == 0
}

/// Enumerates all `2^n` assignments in Gray-code order. Among minimizers
/// (energies within 1e-12) the lexicographically smallest `(x_0, x_1, …)`
/// wins.
pub fn solve_exhaustive(model: &QuboModel) -> Result<SolveResult, AnnealError> {
    solve_exhaustive_timed(model, &MonotonicClock::new())
}

/// [`solve_exhaustive`] with `wall_time` read from `clock`.
pub fn solve_exhaustive_timed(model: &QuboModel, clock: &dyn Clock) -> Result<SolveResult, AnnealError> {
    let n = model.n();
    if n > EXHAUSTIVE_MAX_VARS {
        return Err(AnnealError::TooLarge {
            n,
            max: EXHAUSTIVE_MAX_VARS,
        });
    }
    let start = clock.now();
    let adj = model.adjacency();
    let mut state = LocalField::new(model, &adj, vec![false; n]);
    let mut mask: u32 = 0;
    let mut best_mask = 0u32;
    let mut best_energy = state.energy;
    for step in 1u64..(1u64 << n) {
        let i = step.trailing_zeros() as usize;
        state.flip(i);
        mask ^= 1 << i;
        let e = state.energy;
        if e < best_energy - 1e-12 || (e <= best_energy + 1e-12 && lex_less(mask, best_mask)) {
            best_energy = best_energy.min(e);
            best_mask = mask;
        }
    }
    let assignment: Assignment = (0..n).map(|i| best_mask & (1 << i) != 0).collect();
    let energy = model.evaluate(&assignment);
    Ok(SolveResult {
        assignment,
        energy,
        solver: SolverKind::Exhaustive,
        wall_time: clock.now() - start,
        serialize_time: 0.0,
        restarts_used: 0,
        restart_energies: Vec::new(),
    })
}

pub trait QuboSolver {
    fn solve(&self, model: &QuboModel) -> Result<SolveResult, AnnealError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Solver {
    pub kind: SolverKind,
    pub schedule: AnnealSchedule,
}

impl Solver {
    pub fn new(kind: SolverKind, schedule: AnnealSchedule) -> Self {
        Self { kind, schedule }
    }

    /// Like [`QuboSolver::solve`], with all timings read from `clock`.
    pub fn solve_with_clock(&self, model: &QuboModel, clock: &dyn Clock) -> Result<SolveResult, AnnealError> {
        match self.kind {
            SolverKind::SimulatedAnnealing => solve_sa_timed(model, &self.schedule, clock),
            SolverKind::Exhaustive => solve_exhaustive_timed(model, clock),
            SolverKind::RemoteStub => {
                let (received, serialize_time) = time_dyn(clock, || QuboModel::from_json(&model.to_json()));
                let received = received.map_err(|e| AnnealError::Transfer(e.to_string()))?;
                let mut result = solve_sa_timed(&received, &self.schedule, clock)?;
                result.solver = SolverKind::RemoteStub;
                result.serialize_time = serialize_time;
                Ok(result)
            }
        }
    }
}

impl QuboSolver for Solver {
    fn solve(&self, model: &QuboModel) -> Result<SolveResult, AnnealError> {
        self.solve_with_clock(model, &MonotonicClock::new())
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use rand::{Rng, SeedableRng};

    fn random_model(n: usize, seed: u64) -> QuboModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = QuboModel::new(n);
        for i in 0..n {
            m.add_linear(i, rng.random_range(-1.0..1.0));
            for j in i + 1..n {
                if rng.random_bool(0.5) {
                    m.add_quadratic(i, j, rng.random_range(-1.0..1.0));
                }
            }
        }
        m
    }

    fn brute_force(m: &QuboModel) -> f64 {
        let n = m.n();
        (0u32..1 << n)
            .map(|mask| m.evaluate(&(0..n).map(|i| mask & (1 << i) != 0).collect::<Vec<_>>()))
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn energy_checks_length() {
        let m = QuboModel::new(3);
        assert_eq!(
            energy(&m, &[true]),
            Err(AnnealError::LengthMismatch { expected: 3, found: 1 })
        );
    }

    #[test]
    fn single_variable() {
        let mut m = QuboModel::new(1);
        m.add_linear(0, -1.0);
        let r = solve_exhaustive(&m).unwrap();
        assert_eq!((r.assignment, r.energy), (vec![true], -1.0));
    }

    #[test]
    fn exhaustive_prefers_lexicographically_smallest() {
        let mut m = QuboModel::new(2);
        m.add_linear(0, -1.0);
        m.add_linear(1, -1.0);
        m.add_quadratic(0, 1, 1.0);
        let r = solve_exhaustive(&m).unwrap();
        assert_eq!(r.assignment, vec![false, true]);
        assert_eq!(r.energy, -1.0);
    }

    #[test]
    fn all_zero_model_returns_zero_vector() {
        let r = solve_exhaustive(&QuboModel::new(4)).unwrap();
        assert_eq!(r.assignment, vec![false; 4]);
    }

    #[test]
    fn exhaustive_rejects_large_models() {
        assert_eq!(
            solve_exhaustive(&QuboModel::new(21)).map(|_| ()),
            Err(AnnealError::TooLarge { n: 21, max: 20 })
        );
    }

    #[test]
    fn exhaustive_matches_brute_force() {
        for seed in 0..20 {
            let m = random_model(8, seed);
            assert!((solve_exhaustive(&m).unwrap().energy - brute_force(&m)).abs() < 1e-12);
        }
    }

    #[test]
    fn sa_is_deterministic() {
        let m = random_model(15, 3);
        let s = AnnealSchedule { sweeps: 200, seed: 11, ..Default::default() };
        let a = solve_sa(&m, &s).unwrap();
        let b = solve_sa(&m, &s).unwrap();
        assert_eq!((a.assignment, a.energy), (b.assignment, b.energy));
    }

    #[test]
    fn sa_solution_energy_is_exact() {
        let m = random_model(10, 5);
        let r = solve_sa(&m, &AnnealSchedule { sweeps: 100, ..Default::default() }).unwrap();
        assert_eq!(r.energy, m.evaluate(&r.assignment));
        assert_eq!(r.restart_energies.len(), 8);
    }

    #[test]
    fn remote_stub_reports_transfer_time() {
        let m = random_model(6, 1);
        let solver = Solver::new(SolverKind::RemoteStub, AnnealSchedule { sweeps: 50, ..Default::default() });
        let clock = crate::clock::VirtualClock::new(0.25);
        let r = solver.solve_with_clock(&m, &clock).unwrap();
        assert_eq!(r.serialize_time, 0.25);
        assert_eq!(r.wall_time, 0.25);
        assert_eq!(r.solver, SolverKind::RemoteStub);
    }

    #[test]
    fn unknown_solver_name() {
        assert_eq!(
            "quantum".parse::<SolverKind>(),
            Err(AnnealError::UnknownSolver("quantum".into()))
        );
        assert_eq!("exhaustive".parse::<SolverKind>(), Ok(SolverKind::Exhaustive));
    }

    #[test]
    fn invalid_schedule_rejected() {
        let s = AnnealSchedule { t_end: 5.0, ..Default::default() };
        assert!(matches!(solve_sa(&QuboModel::new(2), &s), Err(AnnealError::InvalidSchedule(_))));
    }

    #[test]
    fn ladder_endpoints() {
        let s = AnnealSchedule::default();
        assert_eq!(s.temperature(0), 2.0);
        assert!((s.temperature(1999) - 0.01).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn incremental_delta_matches_recomputation(seed in 0u64..500, flips in prop::collection::vec(0usize..9, 1..30)) {
            let m = random_model(9, seed);
            let adj = m.adjacency();
            let mut state = LocalField::new(&m, &adj, vec![false; 9]);
            for i in flips {
                let before = m.evaluate(&state.bits);
                let d = state.delta(i);
                state.flip(i);
                let after = m.evaluate(&state.bits);
                prop_assert!((after - before - d).abs() < 1e-9);
                prop_assert!((state.energy - after).abs() < 1e-9);
            }
        }

        #[test]
        fn sa_never_beats_exhaustive(seed in 0u64..200) {
            let m = random_model(7, seed);
            let ex = solve_exhaustive(&m).unwrap();
            let sa = solve_sa(&m, &AnnealSchedule { sweeps: 50, restarts: 2, ..Default::default() }).unwrap();
            prop_assert!(sa.energy >= ex.energy - 1e-12);
        }
    }
}
