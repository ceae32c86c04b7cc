//! Dense tensors and the exact signal constructions built from a ±1 labeling.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Largest number of entries a [`DenseTensor`] may hold (48⁴).
pub const MAX_TENSOR_ENTRIES: usize = 48 * 48 * 48 * 48;
pub const MAX_ORDER: usize = 6;

/// A ±1 labeling of `n` nodes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<i8>", into = "Vec<i8>")]
pub struct SpikeVector {
    entries: Vec<i8>,
    balanced: bool,
}

impl SpikeVector {
    pub fn new(entries: Vec<i8>) -> Result<Self> {
        if entries.is_empty() {
            return invalid("spike vector must be non-empty");
        }
        if let Some(bad) = entries.iter().find(|&&e| e != 1 && e != -1) {
            return invalid(format!("spike vector entries must be ±1, found {bad}"));
        }
        let sum: i64 = entries.iter().map(|&e| e as i64).sum();
        Ok(Self { entries, balanced: sum == 0 })
    }

    /// Like [`SpikeVector::new`] but rejects unbalanced input.
    pub fn balanced(entries: Vec<i8>) -> Result<Self> {
        let v = Self::new(entries)?;
        if !v.balanced {
            return invalid("spike vector is not balanced");
        }
        Ok(v)
    }

    /// First half `+1`, second half `-1`.
    pub fn halves(n: usize) -> Result<Self> {
        if n < 2 || n % 2 == 1 {
            return invalid(format!("halves needs an even n >= 2, got {n}"));
        }
        Self::new((0..n).map(|i| if i < n / 2 { 1 } else { -1 }).collect())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_balanced(&self) -> bool {
        self.balanced
    }

    pub fn entries(&self) -> &[i8] {
        &self.entries
    }

    pub fn get(&self, i: usize) -> i8 {
        self.entries[i]
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.entries.iter().map(|&e| e as f64).collect()
    }

    pub fn dot(&self, other: &SpikeVector) -> i64 {
        assert_eq!(self.len(), other.len(), "length mismatch in dot");
        self.entries.iter().zip(&other.entries).map(|(&a, &b)| (a * b) as i64).sum()
    }

    /// `|xᵀy| / n`.
    pub fn overlap(&self, other: &SpikeVector) -> f64 {
        self.dot(other).unsigned_abs() as f64 / self.len() as f64
    }

    /// Equality up to a global sign flip.
    pub fn matches(&self, other: &SpikeVector) -> bool {
        self.len() == other.len() && self.dot(other).unsigned_abs() as usize == self.len()
    }

    pub fn negated(&self) -> SpikeVector {
        SpikeVector { entries: self.entries.iter().map(|&e| -e).collect(), balanced: self.balanced }
    }

    /// The representative of `{x, -x}` whose first entry is `+1`.
    pub fn canonical(&self) -> SpikeVector {
        if self.entries[0] < 0 {
            self.negated()
        } else {
            self.clone()
        }
    }
}

impl TryFrom<Vec<i8>> for SpikeVector {
    type Error = Error;
    fn try_from(v: Vec<i8>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<SpikeVector> for Vec<i8> {
    fn from(v: SpikeVector) -> Vec<i8> {
        v.entries
    }
}

/// An order-`k`, dimension-`n` real tensor stored flat in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    order: usize,
    dim: usize,
    data: Vec<f64>,
}

fn checked_len(order: usize, dim: usize) -> Result<usize> {
    if !(2..=MAX_ORDER).contains(&order) {
        return invalid(format!("tensor order must lie in 2..={MAX_ORDER}, got {order}"));
    }
    if dim < 2 {
        return invalid(format!("tensor dimension must be at least 2, got {dim}"));
    }
    let mut len = 1usize;
    for _ in 0..order {
        len = len
            .checked_mul(dim)
            .filter(|&l| l <= MAX_TENSOR_ENTRIES)
            .ok_or_else(|| Error::Capacity(format!("{dim}^{order} entries exceeds the {MAX_TENSOR_ENTRIES} cap")))?;
    }
    Ok(len)
}

impl DenseTensor {
    pub fn zeros(order: usize, dim: usize) -> Result<Self> {
        let len = checked_len(order, dim)?;
        Ok(Self { order, dim, data: vec![0.0; len] })
    }

    pub fn from_vec(order: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        let len = checked_len(order, dim)?;
        if data.len() != len {
            return invalid(format!("expected {len} entries, got {}", data.len()));
        }
        Ok(Self { order, dim, data })
    }

    /// Builds a tensor entrywise from its multi-index.
    pub fn from_fn(order: usize, dim: usize, mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        let mut t = Self::zeros(order, dim)?;
        let mut idx = vec![0usize; order];
        for v in t.data.iter_mut() {
            *v = f(&idx);
            increment(&mut idx, dim);
        }
        Ok(t)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.order);
        idx.iter().fold(0, |acc, &i| {
            debug_assert!(i < self.dim);
            acc * self.dim + i
        })
    }

    /// Inverse of [`DenseTensor::offset`].
    pub fn unravel(&self, mut flat: usize, out: &mut [usize]) {
        for slot in out.iter_mut().rev() {
            *slot = flat % self.dim;
            flat /= self.dim;
        }
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: f64) {
        let o = self.offset(idx);
        self.data[o] = v;
    }

    /// Calls `f(multi_index, value)` for every entry in storage order.
    pub fn for_each(&self, mut f: impl FnMut(&[usize], f64)) {
        let mut idx = vec![0usize; self.order];
        for &v in &self.data {
            f(&idx, v);
            increment(&mut idx, self.dim);
        }
    }

    fn check_same_shape(&self, other: &DenseTensor) -> Result<()> {
        if self.order != other.order || self.dim != other.dim {
            return invalid(format!(
                "shape mismatch: order {} dim {} vs order {} dim {}",
                self.order, self.dim, other.order, other.dim
            ));
        }
        Ok(())
    }

    /// `self += s * other`.
    pub fn add_scaled(&mut self, other: &DenseTensor, s: f64) -> Result<()> {
        self.check_same_shape(other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
        Ok(())
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }
}

fn increment(idx: &mut [usize], dim: usize) {
    for slot in idx.iter_mut().rev() {
        *slot += 1;
        if *slot < dim {
            return;
        }
        *slot = 0;
    }
}

/// Equal-sign tensor: 1 where all selected coordinates of `y` agree.
pub fn eq_tensor(y: &SpikeVector, k: usize) -> Result<DenseTensor> {
    DenseTensor::from_fn(k, y.len(), |idx| {
        let first = y.get(idx[0]);
        if idx.iter().all(|&i| y.get(i) == first) {
            1.0
        } else {
            0.0
        }
    })
}

/// Rank-one tensor `y^{⊗k}`.
pub fn rank1_tensor(y: &SpikeVector, k: usize) -> Result<DenseTensor> {
    DenseTensor::from_fn(k, y.len(), |idx| idx.iter().map(|&i| y.get(i) as f64).product())
}

pub fn tensor_inner(a: &DenseTensor, b: &DenseTensor) -> Result<f64> {
    a.check_same_shape(b)?;
    Ok(a.data.iter().zip(&b.data).map(|(x, y)| x * y).sum())
}

/// `((1 - t)^k + (1 + t)^k) / 2^(2k - 1)`; the normalized inner product of two
/// equal-sign tensors whose labelings have correlation `t`.
pub fn phi(t: f64, k: usize) -> f64 {
    debug_assert!(k >= 2);
    let k = k as i32;
    ((1.0 - t).powi(k) + (1.0 + t).powi(k)) / 2f64.powi(2 * k - 1)
}

/// Reshapes an order-4 tensor to the `n² × n²` matrix with
/// row `(i, j) ↦ i·n + j` and column `(k, l) ↦ k·n + l`.
pub fn flatten4(t: &DenseTensor) -> Result<DMatrix<f64>> {
    if t.order != 4 {
        return invalid(format!("flatten4 needs an order-4 tensor, got order {}", t.order));
    }
    let side = t.dim * t.dim;
    Ok(DMatrix::from_row_slice(side, side, &t.data))
}

/// Flips `y_a = +1` and `y_b = -1`, keeping the vector balanced.
pub fn flip_pair(y: &SpikeVector, a: usize, b: usize) -> Result<SpikeVector> {
    if !y.is_balanced() {
        return invalid("flip_pair needs a balanced vector");
    }
    if a >= y.len() || b >= y.len() {
        return invalid(format!("flip indices ({a}, {b}) out of range for n = {}", y.len()));
    }
    if y.get(a) != 1 || y.get(b) != -1 {
        return invalid(format!("flip_pair needs y[{a}] = +1 and y[{b}] = -1, found {} and {}", y.get(a), y.get(b)));
    }
    let mut entries = y.entries().to_vec();
    entries[a] = -1;
    entries[b] = 1;
    SpikeVector::new(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sv(v: &[i8]) -> SpikeVector {
        SpikeVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn spike_vector_validation() {
        assert!(SpikeVector::new(vec![1, 0, -1]).is_err());
        assert!(SpikeVector::new(vec![]).is_err());
        assert!(sv(&[1, -1]).is_balanced());
        assert!(!sv(&[1, 1, -1]).is_balanced());
        assert!(SpikeVector::balanced(vec![1, 1, -1]).is_err());
        let json = serde_json::to_string(&sv(&[1, -1])).unwrap();
        assert_eq!(json, "[1,-1]");
        assert!(serde_json::from_str::<SpikeVector>("[1,2]").is_err());
    }

    #[test]
    fn eq_tensor_small_cases() {
        let t = eq_tensor(&sv(&[1, -1]), 2).unwrap();
        assert_eq!(t.data(), &[1.0, 0.0, 0.0, 1.0]);
        let t = eq_tensor(&sv(&[1, 1, -1, -1]), 4).unwrap();
        assert_eq!(t.get(&[0, 1, 0, 1]), 1.0);
        assert_eq!(t.get(&[0, 2, 0, 2]), 0.0);
        assert!(eq_tensor(&sv(&[1, -1]), 1).is_err());
        assert!(eq_tensor(&sv(&[1]), 2).is_err());
    }

    #[test]
    fn rank1_small_case() {
        let t = rank1_tensor(&sv(&[1, -1]), 2).unwrap();
        assert_eq!(t.data(), &[1.0, -1.0, -1.0, 1.0]);
    }

    #[test]
    fn offsets_round_trip() {
        let t = DenseTensor::zeros(3, 5).unwrap();
        let mut idx = [0usize; 3];
        for flat in 0..125 {
            t.unravel(flat, &mut idx);
            assert_eq!(t.offset(&idx), flat);
        }
    }

    #[test]
    fn phi_values() {
        assert_eq!(phi(1.0, 4), 0.125);
        assert_eq!(phi(0.0, 4), 1.0 / 64.0);
        assert_eq!(phi(0.5, 4), 0.0400390625);
    }

    #[test]
    fn capacity_cap() {
        assert!(matches!(DenseTensor::zeros(4, 49), Err(Error::Capacity(_))));
        assert!(DenseTensor::zeros(4, 48).is_ok());
        assert!(DenseTensor::zeros(7, 2).is_err());
    }

    #[test]
    fn flatten_index_map() {
        let t = DenseTensor::from_fn(4, 3, |i| (i[0] * 1000 + i[1] * 100 + i[2] * 10 + i[3]) as f64).unwrap();
        let m = flatten4(&t).unwrap();
        // ((2,3),(1,2)) in one-based indexing.
        assert_eq!(m[(3 + 2, 1)], t.get(&[1, 2, 0, 1]));
        assert!(flatten4(&DenseTensor::zeros(3, 3).unwrap()).is_err());
    }

    #[test]
    fn flip_pair_rules() {
        let y = sv(&[1, 1, -1, -1]);
        let z = flip_pair(&y, 0, 2).unwrap();
        assert_eq!(z.dot(&y), 0);
        assert!(z.is_balanced());
        assert_eq!(flip_pair(&z, 2, 0).unwrap(), y);
        assert!(flip_pair(&y, 2, 0).is_err());
    }
}
