use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qprior::anneal::{solve_exhaustive, solve_sa, AnnealSchedule};
use qprior::evaluate::{apfd, tet};
use qprior::prioritize::prioritize_random;
use qprior::qubo::{build_selection_qubo, decompose, merge_solutions, OverlapMatrix, QuboConfig, QuboModel};
use qprior::{FeatureVector, Ordering, Policy, Suite, TestCaseRecord};

fn suite_from(detects: &[Vec<usize>], times: &[f64]) -> Suite {
    let recs = detects
        .iter()
        .zip(times)
        .enumerate()
        .map(|(i, (d, &t))| {
            TestCaseRecord::new(
                format!("t{i:02}"),
                FeatureVector::new(),
                BTreeSet::new(),
                t,
                d.iter().map(|f| format!("f{f}")).collect(),
            )
        })
        .collect();
    Suite::from_records("s", recs)
}

fn order(suite: &Suite, perm: &[usize]) -> Ordering {
    Ordering::all_selected(Policy::Random, perm.iter().map(|&i| suite.records[i].id.clone()).collect()).unwrap()
}

/// Random suite with at least one detectable fault, plus a permutation.
fn suite_and_perm() -> impl Strategy<Value = (Vec<Vec<usize>>, Vec<f64>, Vec<usize>)> {
    (2usize..12, 1usize..5).prop_flat_map(|(n, m)| {
        (
            proptest::collection::vec(proptest::collection::vec(0..m, 0..3), n),
            proptest::collection::vec(0.1f64..5.0, n),
            Just((0..n).collect::<Vec<usize>>()).prop_shuffle(),
        )
            .prop_filter("needs a detected fault", |(d, _, _)| d.iter().any(|r| !r.is_empty()))
    })
}

proptest! {
    #[test]
    fn apfd_within_bounds((d, t, perm) in suite_and_perm()) {
        let s = suite_from(&d, &t);
        let (a, tf) = apfd(&order(&s, &perm), &s.faults).unwrap();
        let n = perm.len() as f64;
        prop_assert!(a > 0.0 && a <= 1.0 - 1.0 / n + 1.0 / (2.0 * n) + 1e-12);
        prop_assert!(tf.iter().all(|&p| p >= 1 && p <= perm.len()));
    }

    #[test]
    fn single_fault_reversal(n in 2usize..15, first in 0usize..15, span in 0usize..15, seed in any::<u64>()) {
        let first = first % n;
        let last = (first + span).min(n - 1);
        let mut rows = vec![Vec::new(); n];
        rows[first] = vec![0];
        rows[last] = vec![0];
        let s = suite_from(&rows, &vec![1.0; n]);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let rev: Vec<usize> = perm.iter().rev().copied().collect();
        let pos: Vec<usize> = perm
            .iter()
            .enumerate()
            .filter(|(_, &i)| i == first || i == last)
            .map(|(p, _)| p)
            .collect();
        let gap = (pos[pos.len() - 1] - pos[0]) as f64;
        let sum = apfd(&order(&s, &perm), &s.faults).unwrap().0 + apfd(&order(&s, &rev), &s.faults).unwrap().0;
        prop_assert!((sum - (1.0 + gap / n as f64)).abs() < 1e-12);
    }

    #[test]
    fn invariant_after_last_detection((d, t, perm) in suite_and_perm(), seed in any::<u64>()) {
        let s = suite_from(&d, &t);
        let base = order(&s, &perm);
        let (a, tf) = apfd(&base, &s.faults).unwrap();
        let cut = *tf.iter().max().unwrap();
        let mut shuffled = perm.clone();
        shuffled[cut..].shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let other = order(&s, &shuffled);
        prop_assert_eq!(apfd(&other, &s.faults).unwrap().0, a);
        prop_assert_eq!(tet(&other, &s.faults, &s.records), tet(&base, &s.faults, &s.records));
    }

    #[test]
    fn tet_is_prefix_sum_to_last_detection((d, t, perm) in suite_and_perm()) {
        let s = suite_from(&d, &t);
        let o = order(&s, &perm);
        let (_, tf) = apfd(&o, &s.faults).unwrap();
        let cut = *tf.iter().max().unwrap();
        let expected: f64 = perm[..cut].iter().map(|&i| t[i]).sum();
        let got = tet(&o, &s.faults, &s.records);
        prop_assert!((got - expected).abs() < 1e-9);
        prop_assert!(got <= t.iter().sum::<f64>() + 1e-9);
    }

    #[test]
    fn tet_grows_with_slower_tests((d, t, perm) in suite_and_perm(), k in 0usize..12, extra in 0.0f64..3.0) {
        let s = suite_from(&d, &t);
        let mut t2 = t.clone();
        let k = k % t.len();
        t2[k] += extra;
        let s2 = suite_from(&d, &t2);
        prop_assert!(tet(&order(&s2, &perm), &s2.faults, &s2.records) >= tet(&order(&s, &perm), &s.faults, &s.records));
    }

    #[test]
    fn selection_qubo_matches_objective(
        n in 1usize..9,
        seed in any::<u64>(),
        lambda_r in 0.0f64..2.0,
        lambda_t in 0.0f64..2.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let t: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let mut o = OverlapMatrix::zeros(n);
        for i in 0..n {
            for j in i + 1..n {
                o.set(i, j, rng.random());
            }
        }
        let config = QuboConfig { lambda_r, lambda_t, ..Default::default() };
        let model = build_selection_qubo(&p, &t, &o, &config).unwrap();
        let x: Vec<bool> = (0..n).map(|_| rng.random()).collect();
        let mut h = 0.0;
        for i in 0..n {
            if x[i] {
                h += -p[i] + lambda_t * t[i];
                for j in i + 1..n {
                    if x[j] {
                        h += lambda_r * o.get(i, j);
                    }
                }
            }
        }
        prop_assert!((model.evaluate(&x) - h).abs() < 1e-9);
    }

    #[test]
    fn decomposition_partitions_and_preserves_energy(n in 1usize..25, density in 0.0f64..0.5, max_vars in 1usize..8, seed in any::<u64>()) {
        let model = random_qubo(n, density, seed);
        let d = decompose(&model, max_vars).unwrap();
        let mut seen = vec![0usize; n];
        for sub in &d.subs {
            prop_assert!(sub.vars.len() <= max_vars);
            for &v in &sub.vars {
                seen[v] += 1;
            }
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let sols: Vec<Vec<bool>> = d.subs.iter().map(|s| (0..s.vars.len()).map(|_| rng.random()).collect()).collect();
        let pairs: Vec<_> = d.subs.iter().zip(&sols).collect();
        let merged = merge_solutions(&pairs, &model).unwrap();
        prop_assert!((merged.energy - model.evaluate(&merged.assignment)).abs() < 1e-9);
        prop_assert!(merged.energy <= merged.merged_energy + 1e-12);
    }

    #[test]
    fn sa_reports_energy_of_its_assignment(n in 1usize..16, seed in any::<u64>()) {
        let model = random_qubo(n, 0.5, seed);
        let schedule = AnnealSchedule { sweeps: 50, restarts: 2, seed, ..Default::default() };
        let r = solve_sa(&model, &schedule).unwrap();
        prop_assert!((r.energy - model.evaluate(&r.assignment)).abs() < 1e-9);
        let best = solve_exhaustive(&model).unwrap();
        prop_assert!(best.energy <= r.energy + 1e-12);
    }
}

fn random_qubo(n: usize, density: f64, seed: u64) -> QuboModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = QuboModel::new(n);
    for i in 0..n {
        m.add_linear(i, rng.random_range(-1.0..1.0));
        for j in i + 1..n {
            if rng.random_bool(density) {
                m.add_quadratic(i, j, rng.random_range(-1.0..1.0));
            }
        }
    }
    m
}

#[test]
fn random_policy_first_position_is_uniform() {
    let s = suite_from(&vec![vec![0]; 6], &[1.0; 6]);
    let trials = 12_000;
    let mut counts = [0usize; 6];
    for seed in 0..trials {
        let o = prioritize_random(&s, seed).unwrap();
        let i = s.records.iter().position(|r| r.id == o.sequence()[0]).unwrap();
        counts[i] += 1;
    }
    for c in counts {
        let f = c as f64 / trials as f64;
        assert!((f - 1.0 / 6.0).abs() <= 0.02, "frequency {f}");
    }
}
