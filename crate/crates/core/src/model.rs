//! Discrete Markov random fields as factor graphs with dense tables.
//!
//! A model is a set of nonnegative factors over subsets of `n` variables,
//! each variable taking values in `{0, ..., d-1}`. The joint distribution
//! is the normalized product of the factors. Includes the Potts-grid
//! benchmark generator.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::table::{table_len, FactorTable};

/// One factor: an id, an ordered variable list, and a dense table.
#[derive(Debug, Clone, PartialEq)]
pub struct Factor {
    pub id: String,
    pub table: FactorTable,
}

impl Factor {
    pub fn new(id: impl Into<String>, table: FactorTable) -> Self {
        Self { id: id.into(), table }
    }

    pub fn variables(&self) -> &[usize] {
        self.table.scope()
    }
}

/// Declarative model description; validated by [`build_model`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub num_variables: usize,
    pub alphabet_size: usize,
    pub factors: Vec<Factor>,
}

/// Serialized form of a factor: variables plus flattened values in the
/// global lexicographic order (first variable slowest).
#[derive(Debug, Serialize, Deserialize)]
struct FactorDto {
    id: String,
    variables: Vec<usize>,
    values: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelDto {
    num_variables: usize,
    alphabet_size: usize,
    factors: Vec<FactorDto>,
}

impl ModelSpec {
    pub fn to_json(&self) -> Result<String> {
        let dto = ModelDto {
            num_variables: self.num_variables,
            alphabet_size: self.alphabet_size,
            factors: self
                .factors
                .iter()
                .map(|f| FactorDto {
                    id: f.id.clone(),
                    variables: f.variables().to_vec(),
                    values: f.table.values().to_vec(),
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&dto)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let dto: ModelDto = serde_json::from_str(text)?;
        let mut factors = Vec::with_capacity(dto.factors.len());
        for f in dto.factors {
            factors.push(Factor::new(f.id, FactorTable::new(f.variables, dto.alphabet_size, f.values)?));
        }
        Ok(Self {
            num_variables: dto.num_variables,
            alphabet_size: dto.alphabet_size,
            factors,
        })
    }
}

/// Validated immutable model with per-variable factor adjacency.
#[derive(Debug, Clone)]
pub struct Model {
    spec: ModelSpec,
    factors_by_id: HashMap<String, usize>,
    var_to_factors: Vec<Vec<usize>>,
}

impl Model {
    pub fn num_variables(&self) -> usize {
        self.spec.num_variables
    }

    pub fn alphabet_size(&self) -> usize {
        self.spec.alphabet_size
    }

    pub fn factors(&self) -> &[Factor] {
        &self.spec.factors
    }

    pub fn factor(&self, idx: usize) -> &Factor {
        &self.spec.factors[idx]
    }

    pub fn factor_index(&self, id: &str) -> Option<usize> {
        self.factors_by_id.get(id).copied()
    }

    /// Indices of the factors touching a variable.
    pub fn factors_on(&self, var: usize) -> &[usize] {
        &self.var_to_factors[var]
    }

    /// Indices of all factors whose scope is contained in `vars` (sorted).
    pub fn factors_within(&self, vars: &[usize]) -> Vec<usize> {
        self.spec
            .factors
            .iter()
            .enumerate()
            .filter(|(_, f)| f.variables().iter().all(|v| vars.binary_search(v).is_ok()))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }
}

/// Validates a [`ModelSpec`] and precomputes adjacency.
pub fn build_model(spec: ModelSpec) -> Result<Model> {
    if spec.alphabet_size < 2 {
        return Err(Error::InvalidModel(format!(
            "alphabet size must be at least 2, got {}",
            spec.alphabet_size
        )));
    }
    let mut factors_by_id = HashMap::with_capacity(spec.factors.len());
    let mut var_to_factors = vec![Vec::new(); spec.num_variables];
    for (idx, factor) in spec.factors.iter().enumerate() {
        let vars = factor.variables();
        if vars.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidModel(format!(
                "factor {}: variable list {vars:?} must be duplicate-free and ascending",
                factor.id
            )));
        }
        if let Some(&v) = vars.iter().find(|&&v| v >= spec.num_variables) {
            return Err(Error::InvalidModel(format!(
                "factor {}: variable index {v} out of range for {} variables",
                factor.id, spec.num_variables
            )));
        }
        if factor.table.arity() != spec.alphabet_size {
            return Err(Error::InvalidModel(format!(
                "factor {}: table alphabet {} does not match model alphabet {}",
                factor.id,
                factor.table.arity(),
                spec.alphabet_size
            )));
        }
        let expect = table_len(spec.alphabet_size, vars.len())?;
        if factor.table.len() != expect {
            return Err(Error::InvalidModel(format!(
                "factor {}: table has {} values, expected {expect}",
                factor.id,
                factor.table.len()
            )));
        }
        if let Some(&bad) = factor.table.values().iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidModel(format!(
                "factor {}: table entries must be finite and nonnegative, found {bad}",
                factor.id
            )));
        }
        if factors_by_id.insert(factor.id.clone(), idx).is_some() {
            return Err(Error::InvalidModel(format!("duplicate factor id {}", factor.id)));
        }
        for &v in vars {
            var_to_factors[v].push(idx);
        }
    }
    Ok(Model { spec, factors_by_id, var_to_factors })
}

/// Parameters of the Potts-grid benchmark model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PottsParams {
    pub grid_rows: usize,
    pub grid_cols: usize,
    /// Off-diagonal pairwise affinity, in (0, 1).
    pub gamma: f64,
    /// Mean of the non-preferred unary weights.
    pub mu: f64,
    /// Half-width of the unary noise; `sigma = 0` degenerates to
    /// constant weights `mu`.
    pub sigma: f64,
    pub seed: u64,
}

impl PottsParams {
    fn validate(&self) -> Result<()> {
        if self.grid_rows == 0 || self.grid_cols == 0 {
            return Err(Error::InvalidModel("grid dimensions must be positive".into()));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::InvalidModel(format!(
                "gamma must lie in (0, 1), got {}",
                self.gamma
            )));
        }
        if !(self.sigma >= 0.0 && self.sigma <= self.mu) {
            return Err(Error::InvalidModel(format!(
                "need 0 <= sigma <= mu, got sigma={} mu={}",
                self.sigma, self.mu
            )));
        }
        if !(self.sigma + self.mu < 1.0) {
            return Err(Error::InvalidModel(format!(
                "need sigma + mu < 1, got {}",
                self.sigma + self.mu
            )));
        }
        Ok(())
    }
}

/// Unary factor id for grid node `v`.
pub fn potts_unary_id(v: usize) -> String {
    format!("phi_{v}")
}

/// Pairwise factor id for grid edge `(u, v)` with `u < v`.
pub fn potts_pair_id(u: usize, v: usize) -> String {
    format!("psi_{u}_{v}")
}

/// Builds the Potts grid model.
///
/// Pairwise tables are 1 on the diagonal and `gamma` elsewhere. Unary
/// tables are 1 at state 0; every other state gets an independent draw
/// `mu + sigma*Y` with `Y` uniform on (-1, 1), keyed by
/// `(seed, node, state)` so the generated model is reproducible
/// regardless of construction order.
pub fn make_potts(params: PottsParams, alphabet_size: usize) -> Result<ModelSpec> {
    params.validate()?;
    if alphabet_size < 2 {
        return Err(Error::InvalidModel("alphabet size must be at least 2".into()));
    }
    let d = alphabet_size;
    let (rows, cols) = (params.grid_rows, params.grid_cols);
    let n = rows * cols;
    let node = |r: usize, c: usize| r * cols + c;

    let mut factors = Vec::new();
    for v in 0..n {
        let mut values = vec![0.0; d];
        values[0] = 1.0;
        for state in 1..d {
            let y = rng::signed_unit(&[params.seed, v as u64, state as u64]);
            values[state] = params.mu + params.sigma * y;
        }
        factors.push(Factor::new(potts_unary_id(v), FactorTable::new(vec![v], d, values)?));
    }

    let mut pair_table = vec![params.gamma; d * d];
    for s in 0..d {
        pair_table[s * d + s] = 1.0;
    }
    let mut edges = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            if c + 1 < cols {
                edges.push((node(r, c), node(r, c + 1)));
            }
            if r + 1 < rows {
                edges.push((node(r, c), node(r + 1, c)));
            }
        }
    }
    edges.sort_unstable();
    for (u, v) in edges {
        factors.push(Factor::new(
            potts_pair_id(u, v),
            FactorTable::new(vec![u, v], d, pair_table.clone())?,
        ));
    }

    Ok(ModelSpec { num_variables: n, alphabet_size: d, factors })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform_unary_spec() -> ModelSpec {
        ModelSpec {
            num_variables: 1,
            alphabet_size: 2,
            factors: vec![Factor::new(
                "phi_0",
                FactorTable::new(vec![0], 2, vec![1.0, 1.0]).unwrap(),
            )],
        }
    }

    #[test]
    fn accepts_single_uniform_unary() {
        let model = build_model(uniform_unary_spec()).unwrap();
        assert_eq!(model.num_variables(), 1);
        assert_eq!(model.factors_on(0), &[0]);
    }

    #[test]
    fn rejects_out_of_range_variable() {
        let spec = ModelSpec {
            num_variables: 1,
            alphabet_size: 2,
            factors: vec![Factor::new(
                "phi_1",
                FactorTable::new(vec![1], 2, vec![1.0, 1.0]).unwrap(),
            )],
        };
        assert!(matches!(build_model(spec), Err(Error::InvalidModel(_))));
    }

    #[test]
    fn rejects_negative_entries() {
        let spec = ModelSpec {
            num_variables: 1,
            alphabet_size: 2,
            factors: vec![Factor::new(
                "phi_0",
                FactorTable::new(vec![0], 2, vec![1.0, -0.5]).unwrap(),
            )],
        };
        assert!(build_model(spec).is_err());
    }

    #[test]
    fn potts_3x3_has_9_unary_and_12_pairwise() {
        let params = PottsParams {
            grid_rows: 3,
            grid_cols: 3,
            gamma: 0.1,
            mu: 0.1,
            sigma: 0.1,
            seed: 7,
        };
        let spec = make_potts(params, 4).unwrap();
        let unary = spec.factors.iter().filter(|f| f.variables().len() == 1).count();
        let pair = spec.factors.iter().filter(|f| f.variables().len() == 2).count();
        assert_eq!((unary, pair), (9, 12));
        build_model(spec).unwrap();
    }

    #[test]
    fn potts_unary_noise_stays_in_open_interval() {
        let params = PottsParams {
            grid_rows: 3,
            grid_cols: 3,
            gamma: 0.1,
            mu: 0.1,
            sigma: 0.1,
            seed: 42,
        };
        let spec = make_potts(params, 4).unwrap();
        for f in spec.factors.iter().filter(|f| f.variables().len() == 1) {
            assert_eq!(f.table.values()[0], 1.0);
            for &v in &f.table.values()[1..] {
                assert!(v > 0.0 && v < 0.2, "unary entry {v} outside (0, 0.2)");
            }
        }
    }

    #[test]
    fn potts_pairwise_table_is_diagonal_affinity() {
        let params = PottsParams {
            grid_rows: 2,
            grid_cols: 2,
            gamma: 0.3,
            mu: 0.1,
            sigma: 0.05,
            seed: 1,
        };
        let d = 3;
        let spec = make_potts(params, d).unwrap();
        for f in spec.factors.iter().filter(|f| f.variables().len() == 2) {
            let ones = f.table.values().iter().filter(|&&v| v == 1.0).count();
            let gammas = f.table.values().iter().filter(|&&v| v == 0.3).count();
            assert_eq!((ones, gammas), (d, d * d - d));
        }
    }

    #[test]
    fn potts_sigma_zero_gives_constant_mu() {
        let params = PottsParams {
            grid_rows: 2,
            grid_cols: 2,
            gamma: 0.5,
            mu: 0.1,
            sigma: 0.0,
            seed: 9,
        };
        let spec = make_potts(params, 2).unwrap();
        for f in spec.factors.iter().filter(|f| f.variables().len() == 1) {
            assert_eq!(f.table.values(), &[1.0, 0.1]);
        }
    }

    #[test]
    fn potts_same_seed_is_bit_identical() {
        let params = PottsParams {
            grid_rows: 3,
            grid_cols: 3,
            gamma: 0.1,
            mu: 0.1,
            sigma: 0.1,
            seed: 123,
        };
        let a = make_potts(params, 4).unwrap();
        let b = make_potts(params, 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn model_json_roundtrip_is_field_exact() {
        let params = PottsParams {
            grid_rows: 2,
            grid_cols: 3,
            gamma: 0.2,
            mu: 0.3,
            sigma: 0.1,
            seed: 5,
        };
        let spec = make_potts(params, 3).unwrap();
        let text = spec.to_json().unwrap();
        let back = ModelSpec::from_json(&text).unwrap();
        assert_eq!(spec, back);
    }
}
