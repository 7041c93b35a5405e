//! Test-case prioritization through QUBO optimization.
//!
//! A random-forest classifier estimates how likely each test is to expose a
//! fault. Those estimates, together with execution times and coverage
//! overlap, are compiled into a QUBO whose minimizers select low-redundancy,
//! high-yield batches of tests. Simulated annealing stands in for a quantum
//! annealer behind a pluggable [`anneal::QuboSolver`] interface.
//!
//! Module map:
//!
//! * [`model`]: shared domain types and structural validation
//! * [`ingest`]: file formats, preprocessing, splits, synthetic suites
//! * [`learner`]: CART trees, random forest, grid search, RFE, metrics
//! * [`qubo`]: QUBO model, selection objective, decomposition and merge
//! * [`anneal`]: exhaustive oracle, simulated annealing, solver dispatch
//! * [`prioritize`]: the four ordering policies
//! * [`evaluate`]: APFD, TET, overhead ledgers, paired permutation test
//! * [`pipeline`]: in-process CI/CD build simulation
//! * [`report`]: Table I and figure emitters (hand-written SVG)

pub mod anneal;
pub mod bench;
pub mod clock;
pub mod evaluate;
pub mod ingest;
pub mod learner;
pub mod model;
pub mod pipeline;
pub mod prioritize;
pub mod qubo;
pub mod report;

pub use model::{
    categorize_suite, FaultMatrix, FeatureVector, Ordering, Policy, Suite, SuiteCategory,
    TestCaseRecord,
};
