//! Ground-truth machinery written in the plainest possible style.
//!
//! Exact marginalization by exhaustive enumeration, plus a literal
//! nested-loop implementation of the message update for differential
//! testing. Nothing here reuses the engines' broadcast kernels or the
//! precomputed closures: reachability is rederived by direct search so
//! bugs in the fast paths cannot hide here too.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::gbp::MessageSet;
use crate::model::Model;
use crate::regions::RegionGraph;
use crate::table::FactorTable;

/// Enumeration guard: at most this many joint assignments.
pub const MAX_ENUMERATION: u64 = 100_000_000;

/// Partition function and requested subset marginals.
#[derive(Debug, Clone)]
pub struct ExactResult {
    pub partition_function: f64,
    /// Normalized tables over the requested subsets, in request order.
    pub marginals: Vec<FactorTable>,
}

fn next_assignment(assignment: &mut [usize], arity: usize) -> bool {
    for pos in (0..assignment.len()).rev() {
        assignment[pos] += 1;
        if assignment[pos] < arity {
            return true;
        }
        assignment[pos] = 0;
    }
    false
}

/// Enumerates every joint assignment, accumulating the partition function
/// and the marginals of the requested variable subsets.
pub fn exact_marginals(model: &Model, subsets: &[Vec<usize>]) -> Result<ExactResult> {
    let n = model.num_variables();
    let d = model.alphabet_size();
    let total = (d as u64).checked_pow(n as u32).filter(|&t| t <= MAX_ENUMERATION);
    if total.is_none() {
        return Err(Error::SizeGuard(format!(
            "exact enumeration of {d}^{n} assignments exceeds {MAX_ENUMERATION}"
        )));
    }
    for subset in subsets {
        if subset.windows(2).any(|w| w[0] >= w[1]) || subset.iter().any(|&v| v >= n) {
            return Err(Error::Config(format!(
                "marginal subset {subset:?} must be sorted, duplicate-free and in range"
            )));
        }
    }

    let mut z = 0.0;
    let mut accumulators: Vec<FactorTable> = subsets
        .iter()
        .map(|s| FactorTable::constant(s.clone(), d, 0.0))
        .collect::<Result<_>>()?;

    let mut assignment = vec![0usize; n];
    loop {
        let mut weight = 1.0;
        for factor in model.factors() {
            weight *= factor.table.value_at_global(&assignment);
        }
        z += weight;
        for (subset, acc) in subsets.iter().zip(accumulators.iter_mut()) {
            let mut idx = 0usize;
            for &v in subset {
                idx = idx * d + assignment[v];
            }
            acc.values_mut()[idx] += weight;
        }
        if !next_assignment(&mut assignment, d) {
            break;
        }
    }

    if !(z > 0.0) {
        return Err(Error::Numeric(format!("partition function is not positive: {z}")));
    }
    for acc in &mut accumulators {
        acc.scale(1.0 / z);
    }
    Ok(ExactResult { partition_function: z, marginals: accumulators })
}

fn descendants_by_search(graph: &RegionGraph, start: usize) -> BTreeSet<usize> {
    let mut seen = BTreeSet::new();
    let mut stack: Vec<usize> = graph
        .edges()
        .iter()
        .filter(|e| e.parent == start)
        .map(|e| e.child)
        .collect();
    while let Some(r) = stack.pop() {
        if seen.insert(r) {
            for e in graph.edges() {
                if e.parent == r {
                    stack.push(e.child);
                }
            }
        }
    }
    seen
}

/// Literal nested-loop evaluation of one message update, unnormalized.
///
/// For every assignment of the child's variables, sums over every
/// assignment of the remaining parent variables the product of the
/// parent-not-child factors with the numerator messages over the
/// denominator messages. Closures and edge sets are rederived here from
/// first principles.
pub fn reference_update(
    graph: &RegionGraph,
    model: &Model,
    messages: &MessageSet,
    edge_index: usize,
) -> Result<FactorTable> {
    let d = model.alphabet_size();
    let edge = graph.edges()[edge_index];
    let parent = graph.region(edge.parent);
    let child = graph.region(edge.child);

    let mut reach_p = descendants_by_search(graph, edge.parent);
    reach_p.insert(edge.parent);
    let mut reach_r = descendants_by_search(graph, edge.child);
    reach_r.insert(edge.child);
    let desc_p = descendants_by_search(graph, edge.parent);

    let mut numerator = Vec::new();
    let mut denominator = Vec::new();
    for (i, other) in graph.edges().iter().enumerate() {
        if !reach_p.contains(&other.parent)
            && reach_p.contains(&other.child)
            && !reach_r.contains(&other.child)
        {
            numerator.push(i);
        }
        if desc_p.contains(&other.parent)
            && !reach_r.contains(&other.parent)
            && reach_r.contains(&other.child)
        {
            denominator.push(i);
        }
    }

    let quotient_factors: Vec<usize> = parent
        .factors
        .iter()
        .filter(|f| !child.factors.contains(f))
        .map(|f| model.factor_index(f).expect("validated factor id"))
        .collect();

    let summed: Vec<usize> = parent
        .variables
        .iter()
        .copied()
        .filter(|v| child.variables.binary_search(v).is_err())
        .collect();

    let mut global = vec![0usize; model.num_variables()];
    let mut child_assignment = vec![0usize; child.variables.len()];
    let mut out = FactorTable::constant(child.variables.clone(), d, 0.0)?;
    loop {
        for (pos, &v) in child.variables.iter().enumerate() {
            global[v] = child_assignment[pos];
        }
        let mut acc = 0.0;
        let mut summed_assignment = vec![0usize; summed.len()];
        loop {
            for (pos, &v) in summed.iter().enumerate() {
                global[v] = summed_assignment[pos];
            }
            let mut term = 1.0;
            for &fi in &quotient_factors {
                term *= model.factor(fi).table.value_at_global(&global);
            }
            for &e in &numerator {
                term *= messages.table(e).value_at_global(&global);
            }
            for &e in &denominator {
                term /= messages.table(e).value_at_global(&global);
            }
            acc += term;
            if summed.is_empty() || !next_assignment(&mut summed_assignment, d) {
                break;
            }
        }
        let idx = out.linearize(&child_assignment);
        out.values_mut()[idx] = acc;
        if child_assignment.is_empty() || !next_assignment(&mut child_assignment, d) {
            break;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_model, Factor, ModelSpec};
    use crate::table::FactorTable;

    #[test]
    fn independent_variables_marginal_is_normalized_unary() {
        let factors = vec![
            Factor::new("phi_0", FactorTable::new(vec![0], 3, vec![1.0, 2.0, 3.0]).unwrap()),
            Factor::new("phi_1", FactorTable::new(vec![1], 3, vec![4.0, 1.0, 1.0]).unwrap()),
        ];
        let model =
            build_model(ModelSpec { num_variables: 2, alphabet_size: 3, factors }).unwrap();
        let result = exact_marginals(&model, &[vec![0], vec![1]]).unwrap();
        let m0 = result.marginals[0].values();
        assert!((m0[0] - 1.0 / 6.0).abs() < 1e-12);
        assert!((m0[1] - 2.0 / 6.0).abs() < 1e-12);
        assert!((m0[2] - 3.0 / 6.0).abs() < 1e-12);
        let m1 = result.marginals[1].values();
        assert!((m1[0] - 4.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn marginals_are_consistent_under_further_summation() {
        let factors = vec![
            Factor::new(
                "psi_0_1",
                FactorTable::new(vec![0, 1], 2, vec![0.9, 0.4, 0.2, 1.3]).unwrap(),
            ),
            Factor::new("phi_1", FactorTable::new(vec![1], 2, vec![0.7, 0.5]).unwrap()),
        ];
        let model =
            build_model(ModelSpec { num_variables: 2, alphabet_size: 2, factors }).unwrap();
        let result = exact_marginals(&model, &[vec![0, 1], vec![0]]).unwrap();
        let pair = &result.marginals[0];
        let single = &result.marginals[1];
        for x0 in 0..2 {
            let summed: f64 = (0..2).map(|x1| pair.value_at(&[x0, x1])).sum();
            assert!((summed - single.value_at(&[x0])).abs() < 1e-12);
        }
        assert!((pair.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn size_guard_triggers() {
        let factors = vec![Factor::new(
            "phi_0",
            FactorTable::new(vec![0], 32, vec![1.0; 32]).unwrap(),
        )];
        let model =
            build_model(ModelSpec { num_variables: 32, alphabet_size: 32, factors }).unwrap();
        assert!(matches!(exact_marginals(&model, &[]), Err(Error::SizeGuard(_))));
    }
}
