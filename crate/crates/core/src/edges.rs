//! Per-edge message-update structure and the complexity analyzer.
//!
//! For a directed region-graph edge (P -> R) the update rule sums, over
//! the assignments of the variables in P but not R, the product of a
//! potential quotient with a ratio of other messages. This module derives
//! everything the engines need to evaluate and classify that update:
//!
//! * the numerator and denominator edge sets feeding the message ratio,
//! * the quotient potential (symbolic factor-set difference, never a
//!   numeric division) with its scope,
//! * the dependency scope of the message ratio and its four-way split
//!   against P \ R,
//! * the update class (message-independent, deterministic mix, or
//!   stochastic) with the per-edge complexity exponent and gain.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::Model;
use crate::regions::RegionGraph;
use crate::table::{broadcast_product, pointwise, table_len, union_scopes, FactorTable, PointwiseOp};

/// How an edge's message update behaves under the stochastic engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EdgeClass {
    /// The update depends on no other message; computed once at
    /// initialization and never changed.
    Independent,
    /// The update depends on other messages but needs no sampling; it is
    /// a deterministic convex mix.
    Deterministic,
    /// The update samples part of the summation domain.
    Stochastic,
}

impl std::fmt::Display for EdgeClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EdgeClass::Independent => write!(f, "independent"),
            EdgeClass::Deterministic => write!(f, "deterministic"),
            EdgeClass::Stochastic => write!(f, "stochastic"),
        }
    }
}

/// Everything derived per directed edge (P -> R).
#[derive(Debug, Clone)]
pub struct EdgeMetadata {
    pub edge_index: usize,
    pub parent: usize,
    pub child: usize,
    /// Edges whose messages multiply into the update's numerator.
    pub numerator: Vec<usize>,
    /// Edges whose messages divide the update.
    pub denominator: Vec<usize>,
    /// Product of the factors in P's set but not R's; scope is the union
    /// of their scopes.
    pub quotient: FactorTable,
    /// Variables appearing in the message ratio.
    pub t_scope: Vec<usize>,
    /// Variables of P not in R.
    pub parent_only: Vec<usize>,
    /// (P \ R) intersected with the ratio scope: the sampled coordinates.
    pub sampled_vars: Vec<usize>,
    /// (P \ R) outside the ratio scope: summed exhaustively.
    pub free_vars: Vec<usize>,
    /// Ratio-scope variables outside P \ R; always a subset of R, these
    /// condition the sampling distribution.
    pub cond_vars: Vec<usize>,
    /// Quotient-scope variables outside P \ R.
    pub fixed_vars: Vec<usize>,
    pub class: EdgeClass,
    /// Per-iteration complexity exponent of the stochastic update.
    pub eta: usize,
    /// |P| - eta for stochastic edges (0 otherwise); may be negative.
    pub gain: i64,
    /// True when the stochastic update is strictly cheaper than the
    /// deterministic one.
    pub reduces_complexity: bool,
    /// Scope of the fused product in the deterministic update.
    pub update_scope: Vec<usize>,
    /// update_scope minus P \ R; the fused marginal lands here.
    pub keep_scope: Vec<usize>,
    /// Multiplier accounting for summed variables absent from the fused
    /// product scope, so unnormalized updates match the literal sum.
    pub literal_scale: f64,
    /// Summed-out quotient for independent/deterministic updates, over
    /// fixed_vars, already carrying `literal_scale`.
    pub phi_tilde: Option<FactorTable>,
    /// Fused multiply-add count of one deterministic update.
    pub gbp_fused_ops: u64,
}

fn sorted_diff(a: &[usize], b: &[usize]) -> Vec<usize> {
    a.iter().filter(|v| b.binary_search(v).is_err()).copied().collect()
}

fn sorted_intersect(a: &[usize], b: &[usize]) -> Vec<usize> {
    a.iter().filter(|v| b.binary_search(v).is_ok()).copied().collect()
}

/// The numerator and denominator edge sets of an edge's update, by edge
/// index. Built from the precomputed reach/descendant closures:
///
/// * numerator: edges (I, J) with I outside the reach of P and J inside
///   the reach of P but outside the reach of R;
/// * denominator: edges (I, J) with I a descendant of P outside the reach
///   of R, and J inside the reach of R.
pub fn compute_edge_sets(graph: &RegionGraph, edge_index: usize) -> (Vec<usize>, Vec<usize>) {
    let edge = graph.edges()[edge_index];
    let reach_p = graph.reach_of(edge.parent);
    let reach_r = graph.reach_of(edge.child);
    let desc_p = graph.descendants_of(edge.parent);
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
    (numerator, denominator)
}

/// Symbolic potential quotient for an edge: the product of the factors in
/// the parent's set but not the child's. Never divides numerically; the
/// factor sets are nested by the graph invariants so the quotient is the
/// literal set difference.
pub fn compute_quotient(graph: &RegionGraph, model: &Model, edge_index: usize) -> Result<FactorTable> {
    let edge = graph.edges()[edge_index];
    let parent = graph.region(edge.parent);
    let child = graph.region(edge.child);
    let diff_ids: Vec<&String> = parent
        .factors
        .iter()
        .filter(|f| child.factors.binary_search(f).is_err())
        .collect();
    let tables: Vec<&FactorTable> = diff_ids
        .iter()
        .map(|id| {
            model
                .factor_index(id)
                .map(|fi| &model.factor(fi).table)
                .ok_or_else(|| {
                    Error::InvalidRegionGraph(format!(
                        "region {}: unknown factor id {id}",
                        parent.id
                    ))
                })
        })
        .collect::<Result<_>>()?;
    if tables.is_empty() {
        return Ok(FactorTable::scalar(model.alphabet_size(), 1.0));
    }
    let scope = union_scopes(&tables.iter().map(|t| t.scope()).collect::<Vec<_>>());
    let (quotient, _) = broadcast_product(&scope, model.alphabet_size(), &tables)?;
    Ok(quotient)
}

/// Verifies quotient * child potential == parent potential pointwise.
/// Skipped above the size gate; the dense parent potential is the cost.
fn verify_quotient(
    graph: &RegionGraph,
    model: &Model,
    edge_index: usize,
    quotient: &FactorTable,
) -> Result<()> {
    let edge = graph.edges()[edge_index];
    let parent = graph.region(edge.parent);
    if table_len(model.alphabet_size(), parent.variables.len())? > 1 << 16 {
        return Ok(());
    }
    let parent_pot = graph.region_potential(model, edge.parent)?;
    let child_pot = graph.region_potential(model, edge.child)?;
    let recombined = pointwise(PointwiseOp::Multiply, quotient, &child_pot)?;
    let recombined = recombined.broadcast_to(parent_pot.scope())?;
    for (a, b) in recombined.values().iter().zip(parent_pot.values()) {
        let tol = 1e-12 * b.abs().max(1.0);
        if (a - b).abs() > tol {
            return Err(Error::InvalidRegionGraph(format!(
                "edge {} -> {}: quotient times child potential does not reproduce the parent potential",
                parent.id, graph.region(edge.child).id
            )));
        }
    }
    Ok(())
}

/// Derives the full metadata for one edge.
pub fn analyze_edge(graph: &RegionGraph, model: &Model, edge_index: usize) -> Result<EdgeMetadata> {
    let d = model.alphabet_size();
    let edge = graph.edges()[edge_index];
    let parent = graph.region(edge.parent);
    let child = graph.region(edge.child);

    let (numerator, denominator) = compute_edge_sets(graph, edge_index);
    if numerator.iter().any(|e| denominator.binary_search(e).is_ok()) {
        return Err(Error::InvalidRegionGraph(format!(
            "edge {} -> {}: numerator and denominator edge sets overlap",
            parent.id, child.id
        )));
    }

    let t_scope = union_scopes(
        &numerator
            .iter()
            .chain(denominator.iter())
            .map(|&e| graph.region(graph.edges()[e].child).variables.as_slice())
            .collect::<Vec<_>>(),
    );

    let quotient = compute_quotient(graph, model, edge_index)?;
    verify_quotient(graph, model, edge_index, &quotient)?;

    let parent_only = sorted_diff(&parent.variables, &child.variables);
    let sampled_vars = sorted_intersect(&parent_only, &t_scope);
    let free_vars = sorted_diff(&parent_only, &t_scope);
    let cond_vars = sorted_diff(&t_scope, &parent_only);
    let fixed_vars = sorted_diff(quotient.scope(), &parent_only);
    debug_assert!(
        cond_vars.iter().all(|v| child.variables.binary_search(v).is_ok()),
        "ratio scope outside P \\ R must lie inside R"
    );

    let class = if t_scope.is_empty() {
        EdgeClass::Independent
    } else if sampled_vars.is_empty() {
        EdgeClass::Deterministic
    } else {
        EdgeClass::Stochastic
    };

    let r_len = child.variables.len();
    let eta = match class {
        EdgeClass::Independent => quotient.scope().len(),
        _ => t_scope
            .len()
            .max(r_len + free_vars.len())
            .max(r_len + sampled_vars.len()),
    };
    let gain = match class {
        EdgeClass::Stochastic => parent.variables.len() as i64 - eta as i64,
        _ => 0,
    };
    let reduces_complexity = !sampled_vars.is_empty() && !free_vars.is_empty();

    let update_scope = union_scopes(&[quotient.scope(), &t_scope]);
    let keep_scope = sorted_diff(&update_scope, &parent_only);
    let missing = sorted_diff(&parent_only, &update_scope).len();
    let literal_scale = (d as f64).powi(missing as i32);

    let phi_tilde = match class {
        EdgeClass::Stochastic => None,
        _ => {
            let mut tilde = quotient.marginalize_onto(&fixed_vars)?;
            tilde.scale(literal_scale);
            Some(tilde)
        }
    };

    let gbp_fused_ops = table_len(d, update_scope.len())? as u64;

    Ok(EdgeMetadata {
        edge_index,
        parent: edge.parent,
        child: edge.child,
        numerator,
        denominator,
        quotient,
        t_scope,
        parent_only,
        sampled_vars,
        free_vars,
        cond_vars,
        fixed_vars,
        class,
        eta,
        gain,
        reduces_complexity,
        update_scope,
        keep_scope,
        literal_scale,
        phi_tilde,
        gbp_fused_ops,
    })
}

/// Metadata for every edge of the graph, in edge order.
pub fn analyze_graph(graph: &RegionGraph, model: &Model) -> Result<Vec<EdgeMetadata>> {
    (0..graph.edges().len()).map(|e| analyze_edge(graph, model, e)).collect()
}

/// One row of the analyzer report.
#[derive(Debug, Clone, Serialize)]
pub struct EdgeReportRow {
    pub parent: String,
    pub child: String,
    pub class: EdgeClass,
    pub parent_size: usize,
    pub t_size: usize,
    pub eta: usize,
    pub gain: i64,
    pub reduces: bool,
}

/// Graph-level complexity summary.
#[derive(Debug, Clone, Serialize)]
pub struct AnalysisReport {
    pub rows: Vec<EdgeReportRow>,
    /// Largest top-region size among tops that send messages; the
    /// deterministic engine's dominant exponent.
    pub dominant_exponent: usize,
    /// Largest per-edge exponent under the stochastic engine.
    pub stochastic_exponent: usize,
    /// True when the stochastic engine's dominant per-iteration exponent
    /// is strictly below the deterministic one.
    pub dominant_reduced: bool,
}

/// Per-edge stochastic-update exponent: eta for stochastic edges, the
/// ratio/mix cost for deterministic ones, zero for message-independent
/// edges (they cost nothing after initialization).
pub fn stochastic_edge_exponent(meta: &EdgeMetadata, child_size: usize) -> usize {
    match meta.class {
        EdgeClass::Independent => 0,
        EdgeClass::Deterministic => meta.t_scope.len().max(child_size),
        EdgeClass::Stochastic => meta.eta,
    }
}

pub fn analysis_report(graph: &RegionGraph, metas: &[EdgeMetadata]) -> AnalysisReport {
    let rows: Vec<EdgeReportRow> = metas
        .iter()
        .map(|m| EdgeReportRow {
            parent: graph.region(m.parent).id.clone(),
            child: graph.region(m.child).id.clone(),
            class: m.class,
            parent_size: graph.region(m.parent).len(),
            t_size: m.t_scope.len(),
            eta: m.eta,
            gain: m.gain,
            reduces: m.reduces_complexity,
        })
        .collect();

    let dominant_exponent = metas
        .iter()
        .filter(|m| graph.parents_of(m.parent).is_empty())
        .map(|m| graph.region(m.parent).len())
        .max()
        .unwrap_or(0);
    let stochastic_exponent = metas
        .iter()
        .map(|m| stochastic_edge_exponent(m, graph.region(m.child).len()))
        .max()
        .unwrap_or(0);
    let dominant_reduced = dominant_exponent > 0 && stochastic_exponent < dominant_exponent;

    AnalysisReport { rows, dominant_exponent, stochastic_exponent, dominant_reduced }
}

impl AnalysisReport {
    /// Plain-text table for the CLI.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<24} {:<13} {:>4} {:>4} {:>4} {:>5}  {}\n",
            "edge", "class", "|P|", "|T|", "eta", "gain", "reduces"
        ));
        for row in &self.rows {
            out.push_str(&format!(
                "{:<24} {:<13} {:>4} {:>4} {:>4} {:>5}  {}\n",
                format!("{} -> {}", row.parent, row.child),
                row.class.to_string(),
                row.parent_size,
                row.t_size,
                row.eta,
                row.gain,
                if row.reduces { "yes" } else { "no" }
            ));
        }
        out.push_str(&format!(
            "dominant deterministic exponent: d^{}\n",
            self.dominant_exponent
        ));
        out.push_str(&format!(
            "dominant stochastic exponent:    d^{}\n",
            self.stochastic_exponent
        ));
        out.push_str(&format!(
            "dominant cost reduced: {}\n",
            if self.dominant_reduced { "yes" } else { "no" }
        ));
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
