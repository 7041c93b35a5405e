use std::collections::{BTreeSet, VecDeque};

use super::{QuboError, QuboModel};
use crate::anneal::Assignment;

/// A sub-QUBO over `vars` (original indices, ascending).
#[derive(Debug, Clone, PartialEq)]
pub struct SubProblem {
    pub vars: Vec<usize>,
    pub model: QuboModel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub subs: Vec<SubProblem>,
    /// Couplings whose endpoints landed in different sub-problems.
    pub cut_edges: Vec<(usize, usize, f64)>,
    /// Sum of `|Q_ij|` over the cut couplings.
    pub cut_weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MergeResult {
    pub assignment: Assignment,
    /// Energy of the concatenated sub-solutions before local descent.
    pub merged_energy: f64,
    /// Exact original energy of `assignment`.
    pub energy: f64,
}

/// Connected components of `vertices` in the graph restricted to them.
/// Components come out in order of their smallest vertex, each sorted.
fn components(vertices: &[usize], adj: &[Vec<(usize, f64)>], member: &mut [bool]) -> Vec<Vec<usize>> {
    for &v in vertices {
        member[v] = true;
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for &start in vertices {
        if seen.contains(&start) {
            continue;
        }
        let mut comp = vec![start];
        seen.insert(start);
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            for &(u, _) in &adj[v] {
                if member[u] && !seen.contains(&u) {
                    seen.insert(u);
                    comp.push(u);
                    queue.push_back(u);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    for &v in vertices {
        member[v] = false;
    }
    out
}

/// Splits `vertices` in two by breadth-first growth from the vertex of
/// smallest internal degree until half the vertices are collected.
fn bisect(vertices: &[usize], adj: &[Vec<(usize, f64)>], member: &mut [bool]) -> (Vec<usize>, Vec<usize>) {
    for &v in vertices {
        member[v] = true;
    }
    let degree = |v: usize| adj[v].iter().filter(|(u, _)| member[*u]).count();
    let target = vertices.len().div_ceil(2);
    let mut taken = BTreeSet::new();
    while taken.len() < target {
        let start = vertices
            .iter()
            .copied()
            .filter(|v| !taken.contains(v))
            .min_by_key(|&v| (degree(v), v))
            .expect("fewer vertices than target");
        taken.insert(start);
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            if taken.len() >= target {
                break;
            }
            let mut nbrs: Vec<usize> = adj[v].iter().map(|&(u, _)| u).filter(|&u| member[u]).collect();
            nbrs.sort_unstable();
            for u in nbrs {
                if taken.len() >= target {
                    break;
                }
                if !taken.contains(&u) {
                    taken.insert(u);
                    queue.push_back(u);
                }
            }
        }
    }
    for &v in vertices {
        member[v] = false;
    }
    vertices.iter().partition(|v| taken.contains(v))
}

fn split(vertices: Vec<usize>, max_vars: usize, adj: &[Vec<(usize, f64)>], member: &mut [bool], parts: &mut Vec<Vec<usize>>) {
    if vertices.len() <= max_vars {
        parts.push(vertices);
        return;
    }
    let (a, b) = bisect(&vertices, adj, member);
    for half in [a, b] {
        for comp in components(&half, adj, member) {
            split(comp, max_vars, adj, member, parts);
        }
    }
}

/// Partitions `model` into sub-problems of at most `max_vars` variables.
/// Connected components that fit are kept whole; larger ones are bisected
/// recursively and the couplings between halves are dropped. The constant
/// offset goes to the first sub-problem.
pub fn decompose(model: &QuboModel, max_vars: usize) -> Result<Decomposition, QuboError> {
    if max_vars == 0 {
        return Err(QuboError::InvalidMaxVars);
    }
    let n = model.n();
    let adj = model.adjacency();
    let mut member = vec![false; n];
    let all: Vec<usize> = (0..n).collect();
    let mut parts = Vec::new();
    for comp in components(&all, &adj, &mut member) {
        split(comp, max_vars, &adj, &mut member, &mut parts);
    }

    let mut part_of = vec![0usize; n];
    let mut pos = vec![0usize; n];
    for (p, vars) in parts.iter().enumerate() {
        for (k, &v) in vars.iter().enumerate() {
            part_of[v] = p;
            pos[v] = k;
        }
    }
    let mut subs: Vec<SubProblem> = parts
        .into_iter()
        .map(|vars| {
            let mut m = QuboModel::new(vars.len())
                .with_var_ids(vars.iter().map(|&v| model.var_ids()[v].clone()).collect())
                .expect("one id per variable");
            for (k, &v) in vars.iter().enumerate() {
                m.add_linear(k, model.linear()[v]);
            }
            SubProblem { vars, model: m }
        })
        .collect();
    if let Some(first) = subs.first_mut() {
        first.model.set_offset(model.offset());
    }
    let mut cut_edges = Vec::new();
    let mut cut_weight = 0.0;
    for (&(i, j), &q) in model.quadratic() {
        if part_of[i] == part_of[j] {
            subs[part_of[i]].model.add_quadratic(pos[i], pos[j], q);
        } else {
            cut_edges.push((i, j, q));
            cut_weight += q.abs();
        }
    }
    Ok(Decomposition {
        subs,
        cut_edges,
        cut_weight,
    })
}

/// Stitches sub-solutions into a full assignment, then runs one pass of
/// single-flip descent (ascending index order) on the original model to
/// repair damage from cut couplings.
pub fn merge_solutions(
    solutions: &[(&SubProblem, &Assignment)],
    original: &QuboModel,
) -> Result<MergeResult, QuboError> {
    let n = original.n();
    let mut bits = vec![false; n];
    let mut covered = vec![false; n];
    for (sub, sol) in solutions {
        if sol.len() != sub.vars.len() {
            return Err(QuboError::Partition(format!(
                "solution of length {} for {} variables",
                sol.len(),
                sub.vars.len()
            )));
        }
        for (k, &v) in sub.vars.iter().enumerate() {
            if v >= n {
                return Err(QuboError::Partition(format!("variable {v} out of range")));
            }
            if covered[v] {
                return Err(QuboError::Partition(format!("variable {v} appears twice")));
            }
            covered[v] = true;
            bits[v] = sol[k];
        }
    }
    if let Some(v) = covered.iter().position(|c| !c) {
        return Err(QuboError::Partition(format!("variable {v} is missing")));
    }
    let merged_energy = original.evaluate(&bits);
    let adj = original.adjacency();
    for i in 0..n {
        let field = original.linear()[i]
            + adj[i].iter().filter(|(j, _)| bits[*j]).map(|(_, q)| q).sum::<f64>();
        let delta = if bits[i] { -field } else { field };
        if delta < -1e-12 {
            bits[i] = !bits[i];
        }
    }
    let energy = original.evaluate(&bits);
    Ok(MergeResult {
        assignment: bits,
        merged_energy,
        energy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_blocks() -> QuboModel {
        let mut m = QuboModel::new(10);
        for i in 0..10 {
            m.add_linear(i, -0.1 * (i as f64 + 1.0));
        }
        for block in [[0, 2, 4, 6, 8], [1, 3, 5, 7, 9]] {
            for a in 0..5 {
                for b in a + 1..5 {
                    m.add_quadratic(block[a], block[b], 0.3);
                }
            }
        }
        m.set_offset(1.5);
        m
    }

    #[test]
    fn block_diagonal_splits_into_components() {
        let d = decompose(&two_blocks(), 8).unwrap();
        assert_eq!(d.subs.len(), 2);
        assert_eq!(d.subs[0].vars, vec![0, 2, 4, 6, 8]);
        assert_eq!(d.subs[1].vars, vec![1, 3, 5, 7, 9]);
        assert!(d.cut_edges.is_empty());
        assert_eq!(d.subs[0].model.offset(), 1.5);
        assert_eq!(d.subs[1].model.offset(), 0.0);
    }

    #[test]
    fn oversized_component_is_bisected() {
        let mut m = QuboModel::new(6);
        for i in 0..5 {
            m.add_quadratic(i, i + 1, 1.0);
        }
        let d = decompose(&m, 3).unwrap();
        assert!(d.subs.iter().all(|s| s.vars.len() <= 3));
        let mut seen: Vec<usize> = d.subs.iter().flat_map(|s| s.vars.clone()).collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..6).collect::<Vec<_>>());
        assert_eq!(d.cut_edges.len(), 1);
        assert_eq!(d.cut_weight, 1.0);
    }

    #[test]
    fn sub_energies_add_up_without_cuts() {
        let m = two_blocks();
        let d = decompose(&m, 8).unwrap();
        let x: Vec<bool> = (0..10).map(|i| i % 3 == 0).collect();
        let total: f64 = d
            .subs
            .iter()
            .map(|s| s.model.evaluate(&s.vars.iter().map(|&v| x[v]).collect::<Vec<_>>()))
            .sum();
        assert!((total - m.evaluate(&x)).abs() < 1e-12);
    }

    #[test]
    fn merge_rejects_bad_partitions() {
        let m = two_blocks();
        let d = decompose(&m, 8).unwrap();
        let sol = vec![false; 5];
        let missing = merge_solutions(&[(&d.subs[0], &sol)], &m);
        assert!(matches!(missing, Err(QuboError::Partition(_))));
        let dup = merge_solutions(&[(&d.subs[0], &sol), (&d.subs[0], &sol)], &m);
        assert!(matches!(dup, Err(QuboError::Partition(_))));
    }

    #[test]
    fn merge_descent_never_raises_energy() {
        let m = two_blocks();
        let d = decompose(&m, 3).unwrap();
        let sols: Vec<Assignment> = d.subs.iter().map(|s| vec![true; s.vars.len()]).collect();
        let pairs: Vec<(&SubProblem, &Assignment)> = d.subs.iter().zip(&sols).collect();
        let r = merge_solutions(&pairs, &m).unwrap();
        assert!(r.energy <= r.merged_energy + 1e-12);
        assert!((r.energy - m.evaluate(&r.assignment)).abs() < 1e-15);
    }

    #[test]
    fn zero_max_vars_rejected() {
        assert_eq!(decompose(&two_blocks(), 0), Err(QuboError::InvalidMaxVars));
    }
}
