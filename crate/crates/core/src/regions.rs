//! Region graphs: directed acyclic graphs of variable/factor clusters.
//!
//! A region bundles a set of variable nodes with a set of factor nodes
//! whose scopes are contained in those variables. Edges run from strict
//! variable supersets (parents) to subsets (children). The builder
//! validates the structure and precomputes parent, ancestor, descendant
//! and reach closures per region, where the reach of `R` is `R` together
//! with all of its descendants.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Model;
use crate::table::{broadcast_product, FactorTable};

/// One region: sorted variable indices plus sorted member factor ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub id: String,
    pub variables: Vec<usize>,
    pub factors: Vec<String>,
}

impl Region {
    pub fn new(id: impl Into<String>, mut variables: Vec<usize>, mut factors: Vec<String>) -> Self {
        variables.sort_unstable();
        variables.dedup();
        factors.sort();
        factors.dedup();
        Self { id: id.into(), variables, factors }
    }

    /// Number of variable nodes in the region.
    pub fn len(&self) -> usize {
        self.variables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }
}

/// Declarative region-graph description (the on-disk JSON form).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionGraphSpec {
    pub regions: Vec<Region>,
    pub edges: Vec<(String, String)>,
}

impl RegionGraphSpec {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// A directed region-graph edge, by region index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegionEdge {
    pub parent: usize,
    pub child: usize,
}

/// Validated region graph with derived closures.
#[derive(Debug, Clone)]
pub struct RegionGraph {
    regions: Vec<Region>,
    index: HashMap<String, usize>,
    edges: Vec<RegionEdge>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    ancestors: Vec<BTreeSet<usize>>,
    descendants: Vec<BTreeSet<usize>>,
    reach: Vec<BTreeSet<usize>>,
    tops: Vec<usize>,
    topo_order: Vec<usize>,
}

impl RegionGraph {
    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn region(&self, idx: usize) -> &Region {
        &self.regions[idx]
    }

    pub fn region_index(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Edges in canonical order (sorted by parent then child index).
    pub fn edges(&self) -> &[RegionEdge] {
        &self.edges
    }

    pub fn edge_position(&self, parent: usize, child: usize) -> Option<usize> {
        self.edges.iter().position(|e| e.parent == parent && e.child == child)
    }

    pub fn parents_of(&self, idx: usize) -> &[usize] {
        &self.parents[idx]
    }

    pub fn children_of(&self, idx: usize) -> &[usize] {
        &self.children[idx]
    }

    pub fn ancestors_of(&self, idx: usize) -> &BTreeSet<usize> {
        &self.ancestors[idx]
    }

    pub fn descendants_of(&self, idx: usize) -> &BTreeSet<usize> {
        &self.descendants[idx]
    }

    /// The region together with all of its descendants.
    pub fn reach_of(&self, idx: usize) -> &BTreeSet<usize> {
        &self.reach[idx]
    }

    /// Regions with no incoming edge (highest-level ancestors).
    pub fn tops(&self) -> &[usize] {
        &self.tops
    }

    /// A topological order, parents before children.
    pub fn topo_order(&self) -> &[usize] {
        &self.topo_order
    }

    /// Dense product of all member factors of a region, over its
    /// variables. An empty factor set yields the all-ones table.
    pub fn region_potential(&self, model: &Model, idx: usize) -> Result<FactorTable> {
        let region = &self.regions[idx];
        let tables: Vec<&FactorTable> = region
            .factors
            .iter()
            .map(|id| {
                model
                    .factor_index(id)
                    .map(|fi| &model.factor(fi).table)
                    .ok_or_else(|| {
                        Error::InvalidRegionGraph(format!(
                            "region {}: unknown factor id {id}",
                            region.id
                        ))
                    })
            })
            .collect::<Result<_>>()?;
        let (table, _) =
            broadcast_product(&region.variables, model.alphabet_size(), &tables)?;
        Ok(table)
    }
}

/// Validates regions and edges against a model and computes all closures.
pub fn build_region_graph(spec: &RegionGraphSpec, model: &Model) -> Result<RegionGraph> {
    let mut index = HashMap::with_capacity(spec.regions.len());
    for (i, region) in spec.regions.iter().enumerate() {
        if index.insert(region.id.clone(), i).is_some() {
            return Err(Error::InvalidRegionGraph(format!("duplicate region id {}", region.id)));
        }
        if region.variables.is_empty() {
            return Err(Error::InvalidRegionGraph(format!(
                "region {} has no variable nodes",
                region.id
            )));
        }
        if region.variables.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidRegionGraph(format!(
                "region {}: variables must be sorted and duplicate-free",
                region.id
            )));
        }
        if let Some(&v) = region.variables.iter().find(|&&v| v >= model.num_variables()) {
            return Err(Error::InvalidRegionGraph(format!(
                "region {}: variable {v} out of range",
                region.id
            )));
        }
        // Factor closure: a member factor's variables must all be members.
        for fid in &region.factors {
            let fi = model.factor_index(fid).ok_or_else(|| {
                Error::InvalidRegionGraph(format!("region {}: unknown factor id {fid}", region.id))
            })?;
            for v in model.factor(fi).variables() {
                if region.variables.binary_search(v).is_err() {
                    return Err(Error::InvalidRegionGraph(format!(
                        "region {}: factor {fid} touches variable {v} outside the region",
                        region.id
                    )));
                }
            }
        }
    }

    let mut edges = Vec::with_capacity(spec.edges.len());
    for (pid, cid) in &spec.edges {
        let parent = *index.get(pid).ok_or_else(|| {
            Error::InvalidRegionGraph(format!("edge references unknown region {pid}"))
        })?;
        let child = *index.get(cid).ok_or_else(|| {
            Error::InvalidRegionGraph(format!("edge references unknown region {cid}"))
        })?;
        let (p, c) = (&spec.regions[parent], &spec.regions[child]);
        let vars_subset =
            c.variables.iter().all(|v| p.variables.binary_search(v).is_ok());
        if !vars_subset || c.variables.len() >= p.variables.len() {
            return Err(Error::InvalidRegionGraph(format!(
                "edge {pid} -> {cid}: child variables must be a strict subset of the parent's"
            )));
        }
        if let Some(fid) = c.factors.iter().find(|f| p.factors.binary_search(f).is_err()) {
            return Err(Error::InvalidRegionGraph(format!(
                "edge {pid} -> {cid}: child factor {fid} missing from the parent"
            )));
        }
        edges.push(RegionEdge { parent, child });
    }
    edges.sort_by_key(|e| (e.parent, e.child));
    edges.dedup();

    let n = spec.regions.len();
    let mut parents = vec![Vec::new(); n];
    let mut children = vec![Vec::new(); n];
    for e in &edges {
        parents[e.child].push(e.parent);
        children[e.parent].push(e.child);
    }

    // Kahn's algorithm; leftover in-degrees mean a cycle.
    let mut indeg: Vec<usize> = parents.iter().map(|p| p.len()).collect();
    let mut queue: Vec<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
    let mut topo_order = Vec::with_capacity(n);
    let mut head = 0;
    while head < queue.len() {
        let r = queue[head];
        head += 1;
        topo_order.push(r);
        for &c in &children[r] {
            indeg[c] -= 1;
            if indeg[c] == 0 {
                queue.push(c);
            }
        }
    }
    if topo_order.len() != n {
        let stuck = (0..n).find(|&i| indeg[i] > 0).unwrap();
        return Err(Error::InvalidRegionGraph(format!(
            "cycle detected through region {}",
            spec.regions[stuck].id
        )));
    }

    let mut descendants: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for &r in topo_order.iter().rev() {
        let mut set = BTreeSet::new();
        for &c in &children[r] {
            set.insert(c);
            set.extend(descendants[c].iter().copied());
        }
        descendants[r] = set;
    }
    let mut ancestors: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for r in 0..n {
        for &d in &descendants[r] {
            ancestors[d].insert(r);
        }
    }
    let reach: Vec<BTreeSet<usize>> = (0..n)
        .map(|r| {
            let mut set = descendants[r].clone();
            set.insert(r);
            set
        })
        .collect();
    let tops: Vec<usize> = (0..n).filter(|&i| parents[i].is_empty()).collect();

    Ok(RegionGraph {
        regions: spec.regions.clone(),
        index,
        edges,
        parents,
        children,
        ancestors,
        descendants,
        reach,
        tops,
        topo_order,
    })
}

fn region_id_for(vars: &[usize]) -> String {
    let parts: Vec<String> = vars.iter().map(|v| v.to_string()).collect();
    format!("r{}", parts.join("_"))
}

fn maximal_region(model: &Model, vars: Vec<usize>) -> Region {
    let factors = model
        .factors_within(&vars)
        .into_iter()
        .map(|i| model.factor(i).id.clone())
        .collect();
    Region::new(region_id_for(&vars), vars, factors)
}

/// The overlapping 2x2-cluster construction for grid models: clusters as
/// top regions, pairwise cluster intersections as mid regions, and
/// singleton intersections (interior nodes) as bottom regions. Each
/// region carries every model factor whose scope it contains.
pub fn grid_cluster_regions(model: &Model, rows: usize, cols: usize) -> Result<RegionGraphSpec> {
    if rows < 2 || cols < 2 {
        return Err(Error::InvalidRegionGraph(
            "grid cluster construction needs at least a 2x2 grid".into(),
        ));
    }
    if rows * cols != model.num_variables() {
        return Err(Error::InvalidRegionGraph(format!(
            "grid {rows}x{cols} does not match model with {} variables",
            model.num_variables()
        )));
    }
    let node = |r: usize, c: usize| r * cols + c;

    let mut regions = Vec::new();
    let mut edges = Vec::new();

    let mut cluster_ids = HashMap::new();
    for r in 0..rows - 1 {
        for c in 0..cols - 1 {
            let vars = vec![node(r, c), node(r, c + 1), node(r + 1, c), node(r + 1, c + 1)];
            let region = maximal_region(model, vars);
            cluster_ids.insert((r, c), region.id.clone());
            regions.push(region);
        }
    }

    // Mid regions: intersections of horizontally/vertically adjacent clusters.
    let mut mid_ids = HashMap::new();
    for r in 0..rows - 1 {
        for c in 0..cols - 1 {
            if c + 1 < cols - 1 {
                let vars = vec![node(r, c + 1), node(r + 1, c + 1)];
                let region = maximal_region(model, vars);
                edges.push((cluster_ids[&(r, c)].clone(), region.id.clone()));
                edges.push((cluster_ids[&(r, c + 1)].clone(), region.id.clone()));
                mid_ids.insert(region.id.clone(), region.variables.clone());
                regions.push(region);
            }
            if r + 1 < rows - 1 {
                let vars = vec![node(r + 1, c), node(r + 1, c + 1)];
                let region = maximal_region(model, vars);
                edges.push((cluster_ids[&(r, c)].clone(), region.id.clone()));
                edges.push((cluster_ids[&(r + 1, c)].clone(), region.id.clone()));
                mid_ids.insert(region.id.clone(), region.variables.clone());
                regions.push(region);
            }
        }
    }

    // Bottom regions: interior nodes, children of every mid containing them.
    for r in 1..rows - 1 {
        for c in 1..cols - 1 {
            let v = node(r, c);
            let region = maximal_region(model, vec![v]);
            for (mid_id, mid_vars) in &mid_ids {
                if mid_vars.binary_search(&v).is_ok() {
                    edges.push((mid_id.clone(), region.id.clone()));
                }
            }
            regions.push(region);
        }
    }

    edges.sort();
    Ok(RegionGraphSpec { regions, edges })
}

/// Bethe-style regions: one top region per maximal factor scope (carrying
/// every factor contained in it) and one child region per variable shared
/// by at least two tops. GBP on this graph is ordinary belief propagation.
pub fn bethe_regions(model: &Model) -> Result<RegionGraphSpec> {
    let mut scopes: Vec<Vec<usize>> = model.factors().iter().map(|f| f.variables().to_vec()).collect();
    scopes.sort();
    scopes.dedup();
    let maximal: Vec<Vec<usize>> = scopes
        .iter()
        .filter(|s| {
            !scopes.iter().any(|other| {
                other.len() > s.len() && s.iter().all(|v| other.binary_search(v).is_ok())
            })
        })
        .cloned()
        .collect();

    let mut regions: Vec<Region> = maximal
        .iter()
        .map(|vars| maximal_region(model, vars.clone()))
        .collect();
    let mut edges = Vec::new();

    let mut shared_count = vec![0usize; model.num_variables()];
    for vars in &maximal {
        for &v in vars {
            shared_count[v] += 1;
        }
    }
    for v in 0..model.num_variables() {
        if shared_count[v] >= 2 {
            let small = maximal_region(model, vec![v]);
            for (i, vars) in maximal.iter().enumerate() {
                if vars.binary_search(&v).is_ok() {
                    edges.push((regions[i].id.clone(), small.id.clone()));
                }
            }
            regions.push(small);
        }
    }
    edges.sort();
    Ok(RegionGraphSpec { regions, edges })
}
