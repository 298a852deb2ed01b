//! Shared fixtures: the benchmark graphs, seeded random models and
//! region graphs, and independent closure helpers for differential tests.

#![allow(dead_code)]

use std::collections::BTreeSet;

use sgbp_core::gbp::MessageSet;
use sgbp_core::model::{build_model, make_potts, Factor, Model, ModelSpec, PottsParams};
use sgbp_core::regions::{
    build_region_graph, grid_cluster_regions, Region, RegionGraph, RegionGraphSpec,
};
use sgbp_core::rng;
use sgbp_core::table::FactorTable;

pub fn potts_params(seed: u64) -> PottsParams {
    PottsParams { grid_rows: 3, grid_cols: 3, gamma: 0.1, mu: 0.1, sigma: 0.1, seed }
}

/// The 3x3 Potts study instance with overlapping 2x2 clusters.
pub fn potts_3x3(d: usize, seed: u64) -> (Model, RegionGraph) {
    let model = build_model(make_potts(potts_params(seed), d).unwrap()).unwrap();
    let spec = grid_cluster_regions(&model, 3, 3).unwrap();
    let graph = build_region_graph(&spec, &model).unwrap();
    (model, graph)
}

fn keyed_value(seed: u64, a: u64, b: u64) -> f64 {
    0.3 + rng::unit_f64(rng::mix(&[seed, a, b]))
}

fn random_table(scope: Vec<usize>, d: usize, seed: u64, tag: u64) -> FactorTable {
    let len = d.pow(scope.len() as u32);
    let values = (0..len).map(|i| keyed_value(seed, tag, i as u64)).collect();
    FactorTable::new(scope, d, values).unwrap()
}

/// Two-level fixture where the stochastic update wins two orders in the
/// alphabet size on the edge top_b -> out: eight variables, two tops
/// {1,3,6,7} and {0..5}, shared child {1,3} and a second child {2,5}.
pub fn two_level_gain_fixture(d: usize, seed: u64) -> (Model, RegionGraph) {
    let mut factors = Vec::new();
    for v in 0..8usize {
        factors.push(Factor::new(
            format!("phi_{v}"),
            random_table(vec![v], d, seed, v as u64),
        ));
    }
    let pairs = [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (1, 6), (3, 7), (6, 7)];
    for (i, (u, v)) in pairs.iter().enumerate() {
        factors.push(Factor::new(
            format!("psi_{u}_{v}"),
            random_table(vec![*u, *v], d, seed, 100 + i as u64),
        ));
    }
    let model =
        build_model(ModelSpec { num_variables: 8, alphabet_size: d, factors }).unwrap();

    let spec = RegionGraphSpec {
        regions: vec![
            Region::new(
                "top_a",
                vec![1, 3, 6, 7],
                vec![
                    "phi_1".into(),
                    "phi_3".into(),
                    "phi_6".into(),
                    "phi_7".into(),
                    "psi_1_6".into(),
                    "psi_3_7".into(),
                    "psi_6_7".into(),
                ],
            ),
            Region::new(
                "top_b",
                vec![0, 1, 2, 3, 4, 5],
                vec![
                    "phi_0".into(),
                    "phi_1".into(),
                    "phi_2".into(),
                    "phi_3".into(),
                    "phi_4".into(),
                    "phi_5".into(),
                    "psi_0_1".into(),
                    "psi_1_2".into(),
                    "psi_2_3".into(),
                    "psi_3_4".into(),
                    "psi_4_5".into(),
                ],
            ),
            Region::new("mid", vec![1, 3], vec!["phi_1".into(), "phi_3".into()]),
            Region::new("out", vec![2, 5], vec!["phi_2".into(), "phi_5".into()]),
        ],
        edges: vec![
            ("top_a".into(), "mid".into()),
            ("top_b".into(), "mid".into()),
            ("top_b".into(), "out".into()),
        ],
    };
    let graph = build_region_graph(&spec, &model).unwrap();
    (model, graph)
}

/// Nine-node ring plus a middle column; with two six-variable tops over a
/// three-variable child, both updates are message-independent and the
/// quotient scope is a strict subset of the parent.
pub fn ring_column_fixture(d: usize, seed: u64) -> (Model, RegionGraph) {
    let mut factors = Vec::new();
    for v in 0..9usize {
        factors.push(Factor::new(
            format!("phi_{v}"),
            random_table(vec![v], d, seed, v as u64),
        ));
    }
    // Ring 0-1-2-5-8-7-6-3-0 plus column 1-4-7.
    let pairs = [(0, 1), (1, 2), (2, 5), (5, 8), (7, 8), (6, 7), (3, 6), (0, 3), (1, 4), (4, 7)];
    for (i, (u, v)) in pairs.iter().enumerate() {
        factors.push(Factor::new(
            format!("psi_{u}_{v}"),
            random_table(vec![*u, *v], d, seed, 200 + i as u64),
        ));
    }
    let model =
        build_model(ModelSpec { num_variables: 9, alphabet_size: d, factors }).unwrap();

    let left = vec![0, 1, 3, 4, 6, 7];
    let right = vec![1, 2, 4, 5, 7, 8];
    let middle = vec![1, 4, 7];
    let maximal = |vars: &Vec<usize>| {
        model
            .factors_within(vars)
            .into_iter()
            .map(|i| model.factor(i).id.clone())
            .collect::<Vec<_>>()
    };
    let spec = RegionGraphSpec {
        regions: vec![
            Region::new("left", left.clone(), maximal(&left)),
            Region::new("right", right.clone(), maximal(&right)),
            Region::new("column", middle.clone(), maximal(&middle)),
        ],
        edges: vec![
            ("left".into(), "column".into()),
            ("right".into(), "column".into()),
        ],
    };
    let graph = build_region_graph(&spec, &model).unwrap();
    (model, graph)
}

/// Fixture with one deterministic-mix edge (p -> r) alongside two
/// message-independent edges.
pub fn deterministic_mix_fixture(d: usize, seed: u64) -> (Model, RegionGraph) {
    let mut factors = Vec::new();
    for v in 0..4usize {
        factors.push(Factor::new(
            format!("phi_{v}"),
            random_table(vec![v], d, seed, v as u64),
        ));
    }
    for (i, (u, v)) in [(0, 1), (1, 2), (2, 3)].iter().enumerate() {
        factors.push(Factor::new(
            format!("psi_{u}_{v}"),
            random_table(vec![*u, *v], d, seed, 300 + i as u64),
        ));
    }
    let model =
        build_model(ModelSpec { num_variables: 4, alphabet_size: d, factors }).unwrap();
    let spec = RegionGraphSpec {
        regions: vec![
            Region::new(
                "p",
                vec![0, 1, 2],
                vec!["phi_0".into(), "phi_1".into(), "phi_2".into(), "psi_0_1".into(), "psi_1_2".into()],
            ),
            Region::new(
                "q",
                vec![1, 2, 3],
                vec!["phi_1".into(), "phi_2".into(), "phi_3".into(), "psi_1_2".into(), "psi_2_3".into()],
            ),
            Region::new("r", vec![0, 1], vec!["phi_0".into(), "phi_1".into(), "psi_0_1".into()]),
            Region::new("s", vec![1], vec!["phi_1".into()]),
        ],
        edges: vec![
            ("p".into(), "r".into()),
            ("p".into(), "s".into()),
            ("q".into(), "s".into()),
        ],
    };
    let graph = build_region_graph(&spec, &model).unwrap();
    (model, graph)
}

/// Random positive model: unaries on every variable plus `extra` random
/// pairwise or three-variable factors.
pub fn random_model(n: usize, d: usize, extra: usize, seed: u64) -> Model {
    let mut factors = Vec::new();
    for v in 0..n {
        factors.push(Factor::new(
            format!("phi_{v}"),
            random_table(vec![v], d, seed, v as u64),
        ));
    }
    let mut used: BTreeSet<Vec<usize>> = BTreeSet::new();
    let mut added = 0;
    let mut attempt = 0u64;
    while added < extra && attempt < 200 {
        attempt += 1;
        let size = 2 + (rng::mix(&[seed, 900, attempt]) % 2) as usize;
        if size >= n {
            continue;
        }
        let mut vars = BTreeSet::new();
        let mut probe = 0u64;
        while vars.len() < size {
            vars.insert((rng::mix(&[seed, 901, attempt, probe]) % n as u64) as usize);
            probe += 1;
        }
        let vars: Vec<usize> = vars.into_iter().collect();
        if !used.insert(vars.clone()) {
            continue;
        }
        factors.push(Factor::new(
            format!("f_{}", vars.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("_")),
            random_table(vars, d, seed, 1000 + attempt),
        ));
        added += 1;
    }
    build_model(ModelSpec { num_variables: n, alphabet_size: d, factors }).unwrap()
}

/// Random tree model: node v > 0 attaches to a random earlier node.
pub fn random_tree_model(n: usize, d: usize, seed: u64) -> Model {
    let mut factors = Vec::new();
    for v in 0..n {
        factors.push(Factor::new(
            format!("phi_{v}"),
            random_table(vec![v], d, seed, v as u64),
        ));
    }
    for v in 1..n {
        let parent = (rng::mix(&[seed, 700, v as u64]) % v as u64) as usize;
        let (a, b) = (parent.min(v), parent.max(v));
        factors.push(Factor::new(
            format!("psi_{a}_{b}"),
            random_table(vec![a, b], d, seed, 500 + v as u64),
        ));
    }
    build_model(ModelSpec { num_variables: n, alphabet_size: d, factors }).unwrap()
}

/// Random region graph over a model, built from random top variable sets,
/// their pairwise intersections, and occasional singletons. Every region
/// carries the maximal factor assignment, so subset edges are always
/// structurally valid.
pub fn random_region_graph(model: &Model, seed: u64) -> RegionGraph {
    let n = model.num_variables();
    let maximal = |vars: &[usize]| {
        model
            .factors_within(vars)
            .into_iter()
            .map(|i| model.factor(i).id.clone())
            .collect::<Vec<_>>()
    };

    let mut var_sets: Vec<Vec<usize>> = Vec::new();
    let num_tops = 2 + (rng::mix(&[seed, 1]) % 3) as usize;
    let mut attempt = 0u64;
    while var_sets.len() < num_tops && attempt < 50 {
        attempt += 1;
        let size = (3 + rng::mix(&[seed, 2, attempt]) % 3).min(n as u64) as usize;
        let mut vars = BTreeSet::new();
        let mut probe = 0u64;
        while vars.len() < size {
            vars.insert((rng::mix(&[seed, 3, attempt, probe]) % n as u64) as usize);
            probe += 1;
        }
        let vars: Vec<usize> = vars.into_iter().collect();
        if !var_sets.contains(&vars) {
            var_sets.push(vars);
        }
    }
    let tops = var_sets.clone();
    for i in 0..tops.len() {
        for j in i + 1..tops.len() {
            let inter: Vec<usize> = tops[i]
                .iter()
                .copied()
                .filter(|v| tops[j].binary_search(v).is_ok())
                .collect();
            if !inter.is_empty()
                && inter.len() < tops[i].len()
                && inter.len() < tops[j].len()
                && !var_sets.contains(&inter)
            {
                var_sets.push(inter.clone());
                if inter.len() > 1 && rng::mix(&[seed, 4, i as u64, j as u64]) % 2 == 0 {
                    let single = vec![inter[0]];
                    if !var_sets.contains(&single) {
                        var_sets.push(single);
                    }
                }
            }
        }
    }
    var_sets.truncate(10);

    let regions: Vec<Region> = var_sets
        .iter()
        .enumerate()
        .map(|(i, vars)| Region::new(format!("g{i}"), vars.clone(), maximal(vars)))
        .collect();
    let mut edges = Vec::new();
    for (i, a) in var_sets.iter().enumerate() {
        for (j, b) in var_sets.iter().enumerate() {
            let strict_subset =
                b.len() < a.len() && b.iter().all(|v| a.binary_search(v).is_ok());
            if strict_subset && rng::mix(&[seed, 5, i as u64, j as u64]) % 4 != 0 {
                edges.push((format!("g{i}"), format!("g{j}")));
            }
        }
    }
    let spec = RegionGraphSpec { regions, edges };
    build_region_graph(&spec, model).unwrap()
}

/// Random strictly-positive normalized message set over a graph.
pub fn random_messages(graph: &RegionGraph, d: usize, seed: u64) -> MessageSet {
    let tables = graph
        .edges()
        .iter()
        .enumerate()
        .map(|(e, edge)| {
            let scope = graph.region(edge.child).variables.clone();
            let mut t = random_table(scope, d, seed, 2000 + e as u64);
            t.normalize().unwrap();
            t
        })
        .collect();
    MessageSet::from_tables(tables)
}

/// Independent reachability: descendants of `start` by direct search over
/// the raw edge list.
pub fn search_descendants(graph: &RegionGraph, start: usize) -> BTreeSet<usize> {
    let mut seen = BTreeSet::new();
    let mut stack = vec![start];
    while let Some(r) = stack.pop() {
        for e in graph.edges() {
            if e.parent == r && seen.insert(e.child) {
                stack.push(e.child);
            }
        }
    }
    seen
}

/// Independent enumeration of the numerator/denominator predicates for
/// one edge, from first principles.
pub fn predicate_edge_sets(graph: &RegionGraph, edge_index: usize) -> (Vec<usize>, Vec<usize>) {
    let edge = graph.edges()[edge_index];
    let mut reach_p = search_descendants(graph, edge.parent);
    reach_p.insert(edge.parent);
    let mut reach_r = search_descendants(graph, edge.child);
    reach_r.insert(edge.child);
    let desc_p = search_descendants(graph, edge.parent);
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

/// Fits the least-squares slope of log2(y) against log2(x).
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|(x, _)| x.log2()).collect();
    let ys: Vec<f64> = points.iter().map(|(_, y)| y.log2()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    num / den
}
