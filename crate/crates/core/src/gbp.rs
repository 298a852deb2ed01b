//! Deterministic parent-to-child message passing.
//!
//! One message lives on each region-graph edge, a nonnegative table over
//! the child's variables normalized to sum 1. An iteration applies the
//! local update to every edge; the engine runs the global update to a
//! fixed point and computes region beliefs from converged messages.

use serde::{Deserialize, Serialize};

use crate::edges::EdgeMetadata;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::regions::RegionGraph;
use crate::rng;
use crate::table::{broadcast_product, product_marginal, ratio_product, FactorTable};

/// Messages are kept strictly positive: after normalization, entries
/// below this floor are raised to it and the table renormalized.
pub const MIN_MESSAGE: f64 = 1e-12;

/// Abort threshold for ratio denominators. Renormalization after flooring
/// can pull entries a hair under [`MIN_MESSAGE`]; anything below half the
/// floor means the positivity invariant was actually broken.
pub(crate) const DENOMINATOR_ABORT: f64 = MIN_MESSAGE * 0.5;

/// Per-update operation counts, by inner loop. Each unit is one visited
/// point of the loop's index space (a fused multiply-add).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct OpsBreakdown {
    /// Building the message ratio over its dependency scope.
    pub ratio: u64,
    /// Building sampling weights: normalizer, conditional rows, draws.
    pub weights: u64,
    /// The fused product-and-sum of the update itself.
    pub fused: u64,
    /// Mixing, broadcasting and normalization over the child scope.
    pub mix: u64,
}

impl OpsBreakdown {
    pub fn total(&self) -> u64 {
        self.ratio + self.weights + self.fused + self.mix
    }
}

impl std::ops::AddAssign for OpsBreakdown {
    fn add_assign(&mut self, rhs: Self) {
        self.ratio += rhs.ratio;
        self.weights += rhs.weights;
        self.fused += rhs.fused;
        self.mix += rhs.mix;
    }
}

/// The concatenated message vector: one table per region-graph edge,
/// indexed in the graph's canonical edge order.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageSet {
    tables: Vec<FactorTable>,
}

impl MessageSet {
    /// Uniform initialization: every table constant 1/d^|R|.
    pub fn uniform(graph: &RegionGraph, arity: usize) -> Result<Self> {
        let tables = graph
            .edges()
            .iter()
            .map(|e| {
                let scope = graph.region(e.child).variables.clone();
                let mut t = FactorTable::ones(scope, arity)?;
                t.normalize()?;
                Ok(t)
            })
            .collect::<Result<_>>()?;
        Ok(Self { tables })
    }

    pub fn from_tables(tables: Vec<FactorTable>) -> Self {
        Self { tables }
    }

    pub fn tables(&self) -> &[FactorTable] {
        &self.tables
    }

    pub fn table(&self, edge: usize) -> &FactorTable {
        &self.tables[edge]
    }

    pub fn set_table(&mut self, edge: usize, table: FactorTable) {
        self.tables[edge] = table;
    }

    pub fn num_edges(&self) -> usize {
        self.tables.len()
    }

    /// Total dimension: the sum of the per-edge table lengths.
    pub fn total_dimension(&self) -> usize {
        self.tables.iter().map(|t| t.len()).sum()
    }

    /// Squared L2 norm, optionally restricted to a subset of edges.
    pub fn norm_sq(&self, mask: Option<&[bool]>) -> f64 {
        self.tables
            .iter()
            .enumerate()
            .filter(|(i, _)| mask.map_or(true, |m| m[*i]))
            .map(|(_, t)| t.values().iter().map(|v| v * v).sum::<f64>())
            .sum()
    }

    /// Squared L2 distance to another message set over the same graph.
    pub fn distance_sq(&self, other: &MessageSet, mask: Option<&[bool]>) -> f64 {
        debug_assert_eq!(self.tables.len(), other.tables.len());
        self.tables
            .iter()
            .zip(&other.tables)
            .enumerate()
            .filter(|(i, _)| mask.map_or(true, |m| m[*i]))
            .map(|(_, (a, b))| {
                a.values()
                    .iter()
                    .zip(b.values())
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
            })
            .sum()
    }

    pub fn distance(&self, other: &MessageSet, mask: Option<&[bool]>) -> f64 {
        self.distance_sq(other, mask).sqrt()
    }

    /// Normalized squared error against a reference, optionally on an
    /// edge subset. Zero when the subset is empty.
    pub fn normalized_error(&self, reference: &MessageSet, mask: Option<&[bool]>) -> f64 {
        let denom = reference.norm_sq(mask);
        if denom == 0.0 {
            return 0.0;
        }
        self.distance_sq(reference, mask) / denom
    }
}

/// Message ratio for an edge over its dependency scope: the product of
/// the numerator-edge messages divided by the denominator-edge messages.
/// Empty sets yield the scalar 1.
pub fn mhat(
    messages: &MessageSet,
    meta: &EdgeMetadata,
    arity: usize,
) -> Result<(FactorTable, u64)> {
    if meta.numerator.is_empty() && meta.denominator.is_empty() {
        return Ok((FactorTable::scalar(arity, 1.0), 0));
    }
    let numerators: Vec<&FactorTable> = meta.numerator.iter().map(|&e| messages.table(e)).collect();
    let denominators: Vec<&FactorTable> =
        meta.denominator.iter().map(|&e| messages.table(e)).collect();
    ratio_product(&meta.t_scope, arity, &numerators, &denominators, DENOMINATOR_ABORT)
}

/// Result of one local update.
#[derive(Debug, Clone)]
pub struct EdgeUpdate {
    /// Update normalized to sum 1 with the positivity floor applied.
    pub normalized: FactorTable,
    /// Literal unnormalized update over the child scope.
    pub unnormalized: FactorTable,
    pub ops: OpsBreakdown,
}

/// One deterministic local update: sums the quotient-times-ratio product
/// over the parent-only variables and lands on the child scope.
pub fn gbp_update_edge(
    graph: &RegionGraph,
    meta: &EdgeMetadata,
    messages: &MessageSet,
    arity: usize,
) -> Result<EdgeUpdate> {
    let (ratio, ratio_ops) = mhat(messages, meta, arity)?;
    let (mut raw, fused_ops) = product_marginal(
        &meta.update_scope,
        arity,
        &[&meta.quotient, &ratio],
        &meta.keep_scope,
    )?;
    if meta.literal_scale != 1.0 {
        raw.scale(meta.literal_scale);
    }
    let child_vars = &graph.region(meta.child).variables;
    let mut mix_ops = 0u64;
    if raw.scope() != child_vars.as_slice() {
        raw = raw.broadcast_to(child_vars)?;
        mix_ops += raw.len() as u64;
    }
    if raw.sum() <= 0.0 {
        return Err(Error::Numeric(format!(
            "message update for edge {} -> {} sums to zero",
            graph.region(meta.parent).id,
            graph.region(meta.child).id
        )));
    }
    let mut normalized = raw.clone();
    normalized.floor_and_normalize(MIN_MESSAGE)?;
    mix_ops += normalized.len() as u64;
    Ok(EdgeUpdate {
        normalized,
        unnormalized: raw,
        ops: OpsBreakdown { ratio: ratio_ops, weights: 0, fused: fused_ops, mix: mix_ops },
    })
}

/// Update order of one global iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateOrder {
    /// All edges computed from the previous iterate, then swapped.
    Synchronous,
    /// Edges updated in place, parents before children.
    TopDownSequential,
}

fn sequential_edge_order(graph: &RegionGraph) -> Vec<usize> {
    let mut position = vec![0usize; graph.regions().len()];
    for (rank, &r) in graph.topo_order().iter().enumerate() {
        position[r] = rank;
    }
    let mut order: Vec<usize> = (0..graph.edges().len()).collect();
    order.sort_by_key(|&e| {
        let edge = graph.edges()[e];
        (position[edge.parent], position[edge.child], e)
    });
    order
}

/// One application of the global update.
///
/// Damping `lambda` mixes the fresh normalized update with the previous
/// message before the final floor-and-renormalize.
pub fn gbp_iterate(
    graph: &RegionGraph,
    metas: &[EdgeMetadata],
    messages: &MessageSet,
    arity: usize,
    order: UpdateOrder,
    damping: f64,
) -> Result<(MessageSet, OpsBreakdown)> {
    if !(0.0..1.0).contains(&damping) {
        return Err(Error::Config(format!("damping must lie in [0, 1), got {damping}")));
    }
    let mut ops = OpsBreakdown::default();
    let mut apply = |current: &MessageSet, meta: &EdgeMetadata| -> Result<FactorTable> {
        let update = gbp_update_edge(graph, meta, current, arity)?;
        ops += update.ops;
        let mut next = update.normalized;
        if damping > 0.0 {
            let old = current.table(meta.edge_index);
            for (n, o) in next.values_mut().iter_mut().zip(old.values()) {
                *n = (1.0 - damping) * *n + damping * o;
            }
            ops.mix += 2 * next.len() as u64;
            next.floor_and_normalize(MIN_MESSAGE)?;
        }
        Ok(next)
    };

    match order {
        UpdateOrder::Synchronous => {
            let mut tables = Vec::with_capacity(metas.len());
            for meta in metas {
                tables.push(apply(messages, meta)?);
            }
            Ok((MessageSet::from_tables(tables), ops))
        }
        UpdateOrder::TopDownSequential => {
            let mut current = messages.clone();
            for &e in &sequential_edge_order(graph) {
                let next = apply(&current, &metas[e])?;
                current.set_table(e, next);
            }
            Ok((current, ops))
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GbpOptions {
    pub tol: f64,
    pub max_iters: usize,
    pub damping: f64,
    pub order: UpdateOrder,
}

impl Default for GbpOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iters: 10_000, damping: 0.0, order: UpdateOrder::Synchronous }
    }
}

/// A completed fixed-point run.
#[derive(Debug, Clone)]
pub struct GbpRun {
    pub messages: MessageSet,
    pub converged: bool,
    pub iterations: usize,
    /// L2 change of the concatenated message vector per iteration.
    pub residuals: Vec<f64>,
    pub ops: OpsBreakdown,
    pub wall_ns: u128,
}

/// Iterates the global update until the L2 change drops below `tol`.
pub fn run_to_fixed_point(
    graph: &RegionGraph,
    metas: &[EdgeMetadata],
    init: MessageSet,
    arity: usize,
    options: &GbpOptions,
) -> Result<GbpRun> {
    let start = std::time::Instant::now();
    let mut messages = init;
    let mut residuals = Vec::new();
    let mut ops = OpsBreakdown::default();
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..options.max_iters {
        let (next, iter_ops) =
            gbp_iterate(graph, metas, &messages, arity, options.order, options.damping)?;
        ops += iter_ops;
        let residual = next.distance(&messages, None);
        residuals.push(residual);
        messages = next;
        iterations += 1;
        if residual < options.tol {
            converged = true;
            break;
        }
    }
    Ok(GbpRun { messages, converged, iterations, residuals, ops, wall_ns: start.elapsed().as_nanos() })
}

/// Normalized belief of one region.
#[derive(Debug, Clone)]
pub struct Belief {
    pub region: usize,
    pub table: FactorTable,
}

fn belief_from_potential(
    graph: &RegionGraph,
    potential: &FactorTable,
    messages: &MessageSet,
    region: usize,
) -> Result<FactorTable> {
    let reach = graph.reach_of(region);
    let mut tables: Vec<&FactorTable> = vec![potential];
    for (i, edge) in graph.edges().iter().enumerate() {
        let incoming = edge.child == region;
        let descendant_inflow = reach.contains(&edge.child) && !reach.contains(&edge.parent);
        if incoming || descendant_inflow {
            tables.push(messages.table(i));
        }
    }
    let (mut table, _) =
        broadcast_product(&graph.region(region).variables, potential.arity(), &tables)?;
    if table.sum() <= 0.0 {
        return Err(Error::Numeric(format!(
            "belief of region {} has zero normalizer",
            graph.region(region).id
        )));
    }
    table.normalize()?;
    Ok(table)
}

/// Belief of a region: its potential times every parent message into it,
/// times every message into a descendant from outside the region's reach,
/// normalized over the region's variables.
pub fn compute_belief(
    graph: &RegionGraph,
    model: &Model,
    messages: &MessageSet,
    region: usize,
) -> Result<Belief> {
    let potential = graph.region_potential(model, region)?;
    let table = belief_from_potential(graph, &potential, messages, region)?;
    Ok(Belief { region, table })
}

/// Cached reference beliefs for gauge-invariant error tracking.
///
/// Parent-to-child fixed points are not unique: the messages carry gauge
/// freedom and distinct fixed-point message vectors can induce identical
/// beliefs. Distances measured directly on messages therefore mix real
/// error with meaningless gauge offsets; distances between beliefs do
/// not.
#[derive(Debug, Clone)]
pub struct BeliefReference {
    potentials: Vec<FactorTable>,
    reference: Vec<FactorTable>,
    norm_sq: f64,
}

impl BeliefReference {
    /// Precomputes region potentials and the beliefs induced by a
    /// reference message set (typically a converged fixed point).
    pub fn new(graph: &RegionGraph, model: &Model, reference: &MessageSet) -> Result<Self> {
        let potentials: Vec<FactorTable> = (0..graph.regions().len())
            .map(|r| graph.region_potential(model, r))
            .collect::<Result<_>>()?;
        let beliefs: Vec<FactorTable> = (0..graph.regions().len())
            .map(|r| belief_from_potential(graph, &potentials[r], reference, r))
            .collect::<Result<_>>()?;
        let norm_sq = beliefs
            .iter()
            .map(|t| t.values().iter().map(|v| v * v).sum::<f64>())
            .sum();
        Ok(Self { potentials, reference: beliefs, norm_sq })
    }

    /// Normalized squared belief error of a message set against the
    /// reference beliefs, summed over all regions.
    pub fn error(&self, graph: &RegionGraph, messages: &MessageSet) -> Result<f64> {
        let mut acc = 0.0;
        for r in 0..self.potentials.len() {
            let belief = belief_from_potential(graph, &self.potentials[r], messages, r)?;
            acc += belief
                .values()
                .iter()
                .zip(self.reference[r].values())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
        }
        Ok(acc / self.norm_sq)
    }
}

/// Single-variable marginal estimate: the belief of the smallest region
/// containing the variable, marginalized onto it.
pub fn variable_marginal(
    graph: &RegionGraph,
    model: &Model,
    messages: &MessageSet,
    var: usize,
) -> Result<FactorTable> {
    let region = graph
        .regions()
        .iter()
        .enumerate()
        .filter(|(_, r)| r.variables.binary_search(&var).is_ok())
        .min_by_key(|(i, r)| (r.len(), *i))
        .map(|(i, _)| i)
        .ok_or_else(|| {
            Error::InvalidRegionGraph(format!("no region contains variable {var}"))
        })?;
    compute_belief(graph, model, messages, region)?.table.marginalize_onto(&[var])
}

/// Empirical contraction probe near a fixed point.
#[derive(Debug, Clone, Copy)]
pub struct ContractionProbe {
    /// Largest observed ratio of update distances to input distances.
    pub max_ratio: f64,
    /// Contraction margin estimate: 2 * (1 - max_ratio).
    pub nu_hat: f64,
}

fn probe_update_ratio(
    graph: &RegionGraph,
    metas: &[EdgeMetadata],
    center: &MessageSet,
    arity: usize,
    pairs: usize,
    scale: f64,
    seed: u64,
    damping: f64,
) -> Result<f64> {
    let perturb = |key: u64| -> Result<MessageSet> {
        let mut tables = Vec::with_capacity(center.num_edges());
        for (e, table) in center.tables().iter().enumerate() {
            let mut t = table.clone();
            for (i, v) in t.values_mut().iter_mut().enumerate() {
                *v *= 1.0 + scale * rng::signed_unit(&[seed, key, e as u64, i as u64]);
            }
            t.floor_and_normalize(MIN_MESSAGE)?;
            tables.push(t);
        }
        Ok(MessageSet::from_tables(tables))
    };
    let mut max_ratio: f64 = 0.0;
    for p in 0..pairs {
        let a = perturb(2 * p as u64)?;
        let b = perturb(2 * p as u64 + 1)?;
        let dist = a.distance(&b, None);
        if dist == 0.0 {
            continue;
        }
        let (ua, _) = gbp_iterate(graph, metas, &a, arity, UpdateOrder::Synchronous, damping)?;
        let (ub, _) = gbp_iterate(graph, metas, &b, arity, UpdateOrder::Synchronous, damping)?;
        max_ratio = max_ratio.max(ua.distance(&ub, None) / dist);
    }
    Ok(max_ratio)
}

/// Samples pairs of valid message sets near `center`, applies one global
/// update to each, and reports the largest distance ratio observed.
pub fn estimate_contraction(
    graph: &RegionGraph,
    metas: &[EdgeMetadata],
    center: &MessageSet,
    arity: usize,
    pairs: usize,
    scale: f64,
    seed: u64,
) -> Result<ContractionProbe> {
    let max_ratio = probe_update_ratio(graph, metas, center, arity, pairs, scale, seed, 0.0)?;
    if !(max_ratio > 0.0 && max_ratio < 1.0) {
        return Err(Error::Numeric(format!(
            "contraction probe found ratio {max_ratio}; no usable contraction margin"
        )));
    }
    Ok(ContractionProbe { max_ratio, nu_hat: 2.0 * (1.0 - max_ratio) })
}

/// Contraction probe through the `lambda`-damped update, mapped back to
/// an undamped margin: a damped ratio rho certifies that every update
/// eigenvalue has real part at most 1 - (1 - rho)/(1 - lambda), so the
/// probe reports nu_hat = 2*(1 - rho)/(1 - lambda).
///
/// Useful when the undamped update oscillates (no direct margin) but a
/// damped iteration converges.
pub fn estimate_contraction_damped(
    graph: &RegionGraph,
    metas: &[EdgeMetadata],
    center: &MessageSet,
    arity: usize,
    pairs: usize,
    scale: f64,
    seed: u64,
    lambda: f64,
) -> Result<ContractionProbe> {
    if !(0.0..1.0).contains(&lambda) {
        return Err(Error::Config(format!("damping must lie in [0, 1), got {lambda}")));
    }
    let max_ratio = probe_update_ratio(graph, metas, center, arity, pairs, scale, seed, lambda)?;
    if !(max_ratio > 0.0 && max_ratio < 1.0) {
        return Err(Error::Numeric(format!(
            "damped contraction probe found ratio {max_ratio}; no usable margin"
        )));
    }
    Ok(ContractionProbe { max_ratio, nu_hat: 2.0 * (1.0 - max_ratio) / (1.0 - lambda) })
}

/// Serialized form of one message (for fixed-point files).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MessageDto {
    pub parent: String,
    pub child: String,
    pub variables: Vec<usize>,
    pub values: Vec<f64>,
}

pub fn messages_to_dtos(graph: &RegionGraph, messages: &MessageSet) -> Vec<MessageDto> {
    graph
        .edges()
        .iter()
        .zip(messages.tables())
        .map(|(e, t)| MessageDto {
            parent: graph.region(e.parent).id.clone(),
            child: graph.region(e.child).id.clone(),
            variables: t.scope().to_vec(),
            values: t.values().to_vec(),
        })
        .collect()
}

/// Rebuilds a message set from serialized messages, matching edges by
/// region ids regardless of file order.
pub fn messages_from_dtos(
    graph: &RegionGraph,
    arity: usize,
    dtos: &[MessageDto],
) -> Result<MessageSet> {
    let mut tables: Vec<Option<FactorTable>> = vec![None; graph.edges().len()];
    for dto in dtos {
        let parent = graph.region_index(&dto.parent).ok_or_else(|| {
            Error::Config(format!("message references unknown region {}", dto.parent))
        })?;
        let child = graph.region_index(&dto.child).ok_or_else(|| {
            Error::Config(format!("message references unknown region {}", dto.child))
        })?;
        let pos = graph.edge_position(parent, child).ok_or_else(|| {
            Error::Config(format!("message references unknown edge {} -> {}", dto.parent, dto.child))
        })?;
        tables[pos] = Some(FactorTable::new(dto.variables.clone(), arity, dto.values.clone())?);
    }
    let tables = tables
        .into_iter()
        .enumerate()
        .map(|(i, t)| {
            t.ok_or_else(|| {
                let e = graph.edges()[i];
                Error::Config(format!(
                    "missing message for edge {} -> {}",
                    graph.region(e.parent).id,
                    graph.region(e.child).id
                ))
            })
        })
        .collect::<Result<_>>()?;
    Ok(MessageSet::from_tables(tables))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::edges::analyze_graph;
    use crate::model::{build_model, Factor, Model, ModelSpec};
    use crate::regions::{build_region_graph, Region, RegionGraph, RegionGraphSpec};

    fn all_ones_model(n: usize) -> Model {
        let mut factors = Vec::new();
        for v in 0..n - 1 {
            factors.push(Factor::new(
                format!("psi_{v}_{}", v + 1),
                FactorTable::ones(vec![v, v + 1], 2).unwrap(),
            ));
        }
        build_model(ModelSpec { num_variables: n, alphabet_size: 2, factors }).unwrap()
    }

    fn two_level_graph(model: &Model) -> RegionGraph {
        let spec = RegionGraphSpec {
            regions: vec![
                Region::new("a", vec![0, 1], vec!["psi_0_1".into()]),
                Region::new("b", vec![1, 2], vec!["psi_1_2".into()]),
                Region::new("m", vec![1], vec![]),
            ],
            edges: vec![("a".into(), "m".into()), ("b".into(), "m".into())],
        };
        build_region_graph(&spec, model).unwrap()
    }

    #[test]
    fn uniform_messages_are_fixed_point_of_uniform_model() {
        let model = all_ones_model(3);
        let graph = two_level_graph(&model);
        let metas = analyze_graph(&graph, &model).unwrap();
        let messages = MessageSet::uniform(&graph, 2).unwrap();
        let (next, _) =
            gbp_iterate(&graph, &metas, &messages, 2, UpdateOrder::Synchronous, 0.0).unwrap();
        assert!(next.distance(&messages, None) < 1e-14);
    }

    #[test]
    fn ratio_of_uniform_messages_is_constant() {
        let model = all_ones_model(3);
        let graph = two_level_graph(&model);
        let metas = analyze_graph(&graph, &model).unwrap();
        let messages = MessageSet::uniform(&graph, 2).unwrap();
        for meta in &metas {
            let (m, _) = mhat(&messages, meta, 2).unwrap();
            let first = m.values()[0];
            assert!(m.values().iter().all(|v| (v - first).abs() < 1e-15));
        }
    }

    #[test]
    fn zero_max_iters_returns_input_unconverged() {
        let model = all_ones_model(3);
        let graph = two_level_graph(&model);
        let metas = analyze_graph(&graph, &model).unwrap();
        let messages = MessageSet::uniform(&graph, 2).unwrap();
        let run = run_to_fixed_point(
            &graph,
            &metas,
            messages.clone(),
            2,
            &GbpOptions { max_iters: 0, ..Default::default() },
        )
        .unwrap();
        assert!(!run.converged);
        assert_eq!(run.iterations, 0);
        assert!(run.messages.distance(&messages, None) == 0.0);
    }

    #[test]
    fn isolated_region_belief_is_normalized_potential() {
        let model = all_ones_model(3);
        let spec = RegionGraphSpec {
            regions: vec![Region::new("solo", vec![0, 1], vec!["psi_0_1".into()])],
            edges: vec![],
        };
        let graph = build_region_graph(&spec, &model).unwrap();
        let messages = MessageSet::uniform(&graph, 2).unwrap();
        let belief = compute_belief(&graph, &model, &messages, 0).unwrap();
        let mut expect = graph.region_potential(&model, 0).unwrap();
        expect.normalize().unwrap();
        assert_eq!(belief.table, expect);
    }

    #[test]
    fn message_dto_roundtrip() {
        let model = all_ones_model(3);
        let graph = two_level_graph(&model);
        let messages = MessageSet::uniform(&graph, 2).unwrap();
        let dtos = messages_to_dtos(&graph, &messages);
        let back = messages_from_dtos(&graph, 2, &dtos).unwrap();
        assert_eq!(messages, back);
    }

    #[test]
    fn sequential_order_visits_parents_first() {
        let model = all_ones_model(3);
        let graph = two_level_graph(&model);
        let order = sequential_edge_order(&graph);
        assert_eq!(order.len(), 2);
        // Both edges have top parents here; order must be deterministic.
        let again = sequential_edge_order(&graph);
        assert_eq!(order, again);
    }
}
