//! Dense real-valued tables over ordered variable scopes.
//!
//! A [`FactorTable`] stores one value per joint assignment of its scope.
//! The layout is lexicographic with the FIRST scope variable as the
//! slowest-varying index: for a scope `(x1, x2)` over a binary alphabet the
//! values stack as `f(0,0), f(0,1), f(1,0), f(1,1)`. This order is fixed
//! globally so serialized tables are portable.
//!
//! Broadcasting kernels at the bottom of the module walk the joint
//! assignments of a union scope with an odometer, maintaining each
//! operand's linear index incrementally. They return the number of inner
//! points visited, which is what the complexity instrumentation counts.

use crate::error::{Error, Result};

/// Hard cap on dense table sizes (entries). Guards against accidental
/// multi-gigabyte allocations from oversized scopes.
pub const MAX_TABLE_ENTRIES: usize = 1 << 28;

/// Pointwise table operation selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointwiseOp {
    Multiply,
    Divide,
}

/// Dense table over the joint assignments of a sorted variable scope.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorTable {
    scope: Vec<usize>,
    arity: usize,
    values: Vec<f64>,
}

/// Returns `arity^len` or an error when it exceeds [`MAX_TABLE_ENTRIES`].
pub fn table_len(arity: usize, len: usize) -> Result<usize> {
    let mut total = 1usize;
    for _ in 0..len {
        total = total
            .checked_mul(arity)
            .filter(|&t| t <= MAX_TABLE_ENTRIES)
            .ok_or_else(|| {
                Error::SizeGuard(format!(
                    "dense table with {len} variables over alphabet {arity} exceeds {MAX_TABLE_ENTRIES} entries"
                ))
            })?;
    }
    Ok(total)
}

impl FactorTable {
    /// Builds a table, validating scope ordering and value length.
    pub fn new(scope: Vec<usize>, arity: usize, values: Vec<f64>) -> Result<Self> {
        if arity == 0 {
            return Err(Error::InvalidModel("table arity must be at least 1".into()));
        }
        if scope.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidModel(format!(
                "table scope {scope:?} must be strictly ascending"
            )));
        }
        let expect = table_len(arity, scope.len())?;
        if values.len() != expect {
            return Err(Error::InvalidModel(format!(
                "table over scope {scope:?} needs {expect} values, got {}",
                values.len()
            )));
        }
        Ok(Self { scope, arity, values })
    }

    /// Table filled with a constant.
    pub fn constant(scope: Vec<usize>, arity: usize, value: f64) -> Result<Self> {
        let len = table_len(arity, scope.len())?;
        Self::new(scope, arity, vec![value; len])
    }

    /// All-ones table (the empty product).
    pub fn ones(scope: Vec<usize>, arity: usize) -> Result<Self> {
        Self::constant(scope, arity, 1.0)
    }

    /// Scalar table with an empty scope.
    pub fn scalar(arity: usize, value: f64) -> Self {
        Self { scope: Vec::new(), arity, values: vec![value] }
    }

    pub fn scope(&self) -> &[usize] {
        &self.scope
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Stride of the scope position `pos` in the linear layout.
    pub fn stride(&self, pos: usize) -> usize {
        self.arity.pow((self.scope.len() - 1 - pos) as u32)
    }

    /// Linear index of a joint assignment (one digit per scope variable).
    pub fn linearize(&self, assignment: &[usize]) -> usize {
        debug_assert_eq!(assignment.len(), self.scope.len());
        let mut idx = 0usize;
        for &digit in assignment {
            debug_assert!(digit < self.arity);
            idx = idx * self.arity + digit;
        }
        idx
    }

    /// Inverse of [`linearize`]: writes the digits of `index` into `out`.
    ///
    /// [`linearize`]: FactorTable::linearize
    pub fn delinearize(&self, mut index: usize, out: &mut [usize]) {
        debug_assert_eq!(out.len(), self.scope.len());
        for pos in (0..out.len()).rev() {
            out[pos] = index % self.arity;
            index /= self.arity;
        }
        debug_assert_eq!(index, 0);
    }

    /// Value at a joint assignment of the scope.
    pub fn value_at(&self, assignment: &[usize]) -> f64 {
        self.values[self.linearize(assignment)]
    }

    /// Value at an assignment given over the full variable universe
    /// (`assignment[v]` is the state of variable `v`).
    pub fn value_at_global(&self, assignment: &[usize]) -> f64 {
        let mut idx = 0usize;
        for &v in &self.scope {
            idx = idx * self.arity + assignment[v];
        }
        self.values[idx]
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn scale(&mut self, c: f64) {
        for v in &mut self.values {
            *v *= c;
        }
    }

    /// Rescales the table to sum 1. Errors when the sum is not positive.
    pub fn normalize(&mut self) -> Result<()> {
        let s = self.sum();
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::Numeric(format!(
                "cannot normalize table over scope {:?}: sum {s}",
                self.scope
            )));
        }
        self.scale(1.0 / s);
        Ok(())
    }

    /// Normalizes, raises entries below `floor` to `floor`, and
    /// renormalizes. Keeps message tables strictly positive.
    pub fn floor_and_normalize(&mut self, floor: f64) -> Result<()> {
        self.normalize()?;
        let mut raised = false;
        for v in &mut self.values {
            if *v < floor {
                *v = floor;
                raised = true;
            }
        }
        if raised {
            self.normalize()?;
        }
        Ok(())
    }

    /// Extends the table to a superset scope by repeating entries along the
    /// new axes.
    pub fn broadcast_to(&self, superscope: &[usize]) -> Result<FactorTable> {
        if self.scope == superscope {
            return Ok(self.clone());
        }
        let (out, _) = broadcast_product(superscope, self.arity, &[self])?;
        Ok(out)
    }

    /// Sums out every scope variable not in `keep` (a sorted subset of the
    /// scope). The result's scope is exactly `keep`.
    pub fn marginalize_onto(&self, keep: &[usize]) -> Result<FactorTable> {
        let (out, _) = product_marginal(&self.scope, self.arity, &[self], keep)?;
        Ok(out)
    }
}

/// Pointwise multiply or divide under broadcasting to the union scope.
///
/// For division, `0/0` is defined as `0` (such points carry no mass from
/// the numerator) while `x/0` with `x != 0` is a hard error.
pub fn pointwise(op: PointwiseOp, a: &FactorTable, b: &FactorTable) -> Result<FactorTable> {
    if a.arity != b.arity {
        return Err(Error::InvalidModel(format!(
            "pointwise op over mismatched alphabets {} and {}",
            a.arity, b.arity
        )));
    }
    let union = union_scopes(&[a.scope(), b.scope()]);
    let total = table_len(a.arity, union.len())?;
    let maps = vec![
        stride_map(a.scope(), &union, a.arity),
        stride_map(b.scope(), &union, b.arity),
    ];
    let mut walker = MultiIndex::new(union.len(), a.arity, maps);
    let mut values = Vec::with_capacity(total);
    for _ in 0..total {
        let x = a.values[walker.index(0)];
        let y = b.values[walker.index(1)];
        let v = match op {
            PointwiseOp::Multiply => x * y,
            PointwiseOp::Divide => {
                if y == 0.0 {
                    if x == 0.0 {
                        0.0
                    } else {
                        return Err(Error::Numeric(format!(
                            "division by zero with nonzero numerator {x} in pointwise divide"
                        )));
                    }
                } else {
                    x / y
                }
            }
        };
        values.push(v);
        walker.advance();
    }
    FactorTable::new(union, a.arity, values)
}

/// Sorted union of several sorted scopes.
pub fn union_scopes(scopes: &[&[usize]]) -> Vec<usize> {
    let mut union: Vec<usize> = scopes.iter().flat_map(|s| s.iter().copied()).collect();
    union.sort_unstable();
    union.dedup();
    union
}

/// Per-digit contribution of each union position to a subscope's linear
/// index (zero where the union variable is absent from the subscope).
pub(crate) fn stride_map(sub: &[usize], union: &[usize], arity: usize) -> Vec<usize> {
    union
        .iter()
        .map(|v| match sub.binary_search(v) {
            Ok(pos) => arity.pow((sub.len() - 1 - pos) as u32),
            Err(_) => 0,
        })
        .collect()
}

/// Odometer over the joint assignments of a scope that maintains one
/// linear index per registered stride map.
pub(crate) struct MultiIndex {
    arity: usize,
    digits: Vec<usize>,
    maps: Vec<Vec<usize>>,
    indices: Vec<usize>,
}

impl MultiIndex {
    pub(crate) fn new(len: usize, arity: usize, maps: Vec<Vec<usize>>) -> Self {
        let indices = vec![0; maps.len()];
        Self { arity, digits: vec![0; len], maps, indices }
    }

    #[inline]
    pub(crate) fn index(&self, map: usize) -> usize {
        self.indices[map]
    }

    /// Advances to the next assignment; returns false after wrapping.
    #[inline]
    pub(crate) fn advance(&mut self) -> bool {
        let mut pos = self.digits.len();
        while pos > 0 {
            pos -= 1;
            self.digits[pos] += 1;
            for (m, map) in self.maps.iter().enumerate() {
                self.indices[m] += map[pos];
            }
            if self.digits[pos] < self.arity {
                return true;
            }
            self.digits[pos] = 0;
            for (m, map) in self.maps.iter().enumerate() {
                self.indices[m] -= self.arity * map[pos];
            }
        }
        false
    }
}

/// Broadcast product of several tables over an explicit union scope.
///
/// Returns the product table and the number of points visited.
pub fn broadcast_product(
    union: &[usize],
    arity: usize,
    tables: &[&FactorTable],
) -> Result<(FactorTable, u64)> {
    for t in tables {
        if t.arity != arity {
            return Err(Error::InvalidModel("mismatched alphabet in product".into()));
        }
        if !is_subset(t.scope(), union) {
            return Err(Error::InvalidModel(format!(
                "table scope {:?} not contained in product scope {union:?}",
                t.scope()
            )));
        }
    }
    let total = table_len(arity, union.len())?;
    let maps = tables.iter().map(|t| stride_map(t.scope(), union, arity)).collect();
    let mut walker = MultiIndex::new(union.len(), arity, maps);
    let mut values = Vec::with_capacity(total);
    for _ in 0..total {
        let mut v = 1.0;
        for (m, t) in tables.iter().enumerate() {
            v *= t.values[walker.index(m)];
        }
        values.push(v);
        walker.advance();
    }
    Ok((FactorTable::new(union.to_vec(), arity, values)?, total as u64))
}

/// Broadcast ratio of two table products over an explicit union scope:
/// `prod(numerators) / prod(denominators)` pointwise.
///
/// Every denominator entry must stay at or above `min_den`; messages are
/// floored before they ever reach a denominator, so a smaller value means
/// an internal invariant was broken and the computation aborts.
pub fn ratio_product(
    union: &[usize],
    arity: usize,
    numerators: &[&FactorTable],
    denominators: &[&FactorTable],
    min_den: f64,
) -> Result<(FactorTable, u64)> {
    let total = table_len(arity, union.len())?;
    let mut maps: Vec<Vec<usize>> = Vec::with_capacity(numerators.len() + denominators.len());
    for t in numerators.iter().chain(denominators.iter()) {
        if !is_subset(t.scope(), union) {
            return Err(Error::InvalidModel(format!(
                "table scope {:?} not contained in ratio scope {union:?}",
                t.scope()
            )));
        }
        maps.push(stride_map(t.scope(), union, arity));
    }
    let mut walker = MultiIndex::new(union.len(), arity, maps);
    let mut values = Vec::with_capacity(total);
    for _ in 0..total {
        let mut num = 1.0;
        for (m, t) in numerators.iter().enumerate() {
            num *= t.values[walker.index(m)];
        }
        let mut den = 1.0;
        for (m, t) in denominators.iter().enumerate() {
            let d = t.values[walker.index(numerators.len() + m)];
            if d < min_den {
                return Err(Error::Numeric(format!(
                    "denominator entry {d} below floor {min_den}; message positivity invariant broken"
                )));
            }
            den *= d;
        }
        values.push(num / den);
        walker.advance();
    }
    Ok((FactorTable::new(union.to_vec(), arity, values)?, total as u64))
}

/// Fused broadcast-product-and-marginalize: multiplies `tables` over
/// `union` and sums out every union variable not in `keep`.
///
/// This is the inner double loop of a message update. The returned count
/// (`union` assignments visited) is the instrumented multiply-add total.
pub fn product_marginal(
    union: &[usize],
    arity: usize,
    tables: &[&FactorTable],
    keep: &[usize],
) -> Result<(FactorTable, u64)> {
    if !is_subset(keep, union) {
        return Err(Error::InvalidModel(format!(
            "marginal target {keep:?} not contained in {union:?}"
        )));
    }
    let total = table_len(arity, union.len())?;
    let out_len = table_len(arity, keep.len())?;
    let mut maps: Vec<Vec<usize>> = tables
        .iter()
        .map(|t| stride_map(t.scope(), union, arity))
        .collect();
    maps.push(stride_map(keep, union, arity));
    let out_map = maps.len() - 1;
    let mut walker = MultiIndex::new(union.len(), arity, maps);
    let mut values = vec![0.0; out_len];
    for _ in 0..total {
        let mut v = 1.0;
        for (m, t) in tables.iter().enumerate() {
            v *= t.values[walker.index(m)];
        }
        values[walker.index(out_map)] += v;
        walker.advance();
    }
    Ok((FactorTable::new(keep.to_vec(), arity, values)?, total as u64))
}

fn is_subset(sub: &[usize], sup: &[usize]) -> bool {
    sub.iter().all(|v| sup.binary_search(v).is_ok())
}
