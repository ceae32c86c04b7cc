//! Linear functionals on multilinear polynomials in `x_1, .., x_m` of degree at
//! most 4, stored as vectors over the dmax-4 subset basis.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::basis::{elements_mask, mask_elements, SubsetBasis};
use crate::error::{invalid, Result};
use crate::linalg::sym_eigenvalues;
use crate::tensor::DenseTensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Functional {
    basis: Arc<SubsetBasis>,
    values: Vec<f64>,
}

impl Functional {
    pub fn zeros(m: usize) -> Result<Self> {
        let basis = SubsetBasis::shared(m, 4)?;
        let values = vec![0.0; basis.len()];
        Ok(Self { basis, values })
    }

    pub fn from_values(m: usize, values: Vec<f64>) -> Result<Self> {
        let basis = SubsetBasis::shared(m, 4)?;
        if values.len() != basis.len() {
            return invalid(format!("expected {} values for m = {m}, got {}", basis.len(), values.len()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return invalid("functional values must be finite");
        }
        Ok(Self { basis, values })
    }

    /// `ψ_S = Π_{i ∈ S} y_i`: the expectation under a point mass at `y`.
    pub fn point_mass(y: &[i8]) -> Result<Self> {
        let mut f = Self::zeros(y.len())?;
        for (i, &s) in f.basis.clone().subsets().iter().enumerate() {
            f.values[i] = mask_elements(s).iter().map(|&j| y[j] as f64).product();
        }
        Ok(f)
    }

    pub fn m(&self) -> usize {
        self.basis.m()
    }

    pub fn basis(&self) -> &Arc<SubsetBasis> {
        &self.basis
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, mask: u32) -> Option<f64> {
        self.basis.index_of(mask).map(|i| self.values[i])
    }

    pub fn dot(&self, other: &Functional) -> Result<f64> {
        if self.m() != other.m() {
            return invalid(format!("basis mismatch: m = {} vs m = {}", self.m(), other.m()));
        }
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum())
    }
}

#[derive(Serialize, Deserialize)]
struct FunctionalRepr {
    m: usize,
    values: BTreeMap<String, f64>,
}

fn key(mask: u32) -> String {
    serde_json::to_string(&mask_elements(mask)).expect("serializing a list of indices")
}

impl Serialize for Functional {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let values = self.basis.subsets().iter().zip(&self.values).map(|(&m, &v)| (key(m), v)).collect();
        FunctionalRepr { m: self.m(), values }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Functional {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let repr = FunctionalRepr::deserialize(d)?;
        let mut f = Functional::zeros(repr.m).map_err(D::Error::custom)?;
        if repr.values.len() != f.values.len() {
            return Err(D::Error::custom(format!(
                "expected {} subset keys, got {}",
                f.values.len(),
                repr.values.len()
            )));
        }
        for (k, v) in repr.values {
            let elems: Vec<usize> = serde_json::from_str(&k).map_err(D::Error::custom)?;
            let idx = f
                .basis
                .index_of(elements_mask(&elems))
                .ok_or_else(|| D::Error::custom(format!("subset key {k} is outside the basis")))?;
            f.values[idx] = v;
        }
        Ok(f)
    }
}

/// Moments of the uniform distribution on balanced `x ∈ {±1}^n` with
/// `x_n = 1`, over the remaining `n - 1` coordinates.
pub fn psi0(n: usize) -> Result<Functional> {
    if n < 8 || n % 2 == 1 {
        return invalid(format!("psi0 needs an even n >= 8, got {n}"));
    }
    let mut f = Functional::zeros(n - 1)?;
    let nf = n as f64;
    for i in 0..f.values.len() {
        f.values[i] = match f.basis.size_of(i) {
            0 => 1.0,
            1 | 2 => -1.0 / (nf - 1.0),
            _ => 3.0 / ((nf - 1.0) * (nf - 3.0)),
        };
    }
    Ok(f)
}

/// For every `α ∈ [n]⁴` (row-major), the basis index of the parity reduction
/// of `{α₁, .., α₄}` with element `n - 1` removed.
pub fn alpha_map(n: usize) -> Result<Arc<Vec<u32>>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Vec<u32>>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(v) = cache.lock().expect("alpha map cache poisoned").get(&n) {
        return Ok(v.clone());
    }
    if n < 5 {
        return invalid(format!("noise reduction needs n >= 5, got {n}"));
    }
    let basis = SubsetBasis::shared(n - 1, 4)?;
    let keep = !(1u32 << (n - 1));
    let mut map = Vec::with_capacity(n.pow(4));
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                for d in 0..n {
                    let mask = ((1u32 << a) ^ (1 << b) ^ (1 << c) ^ (1 << d)) & keep;
                    map.push(basis.index_of(mask).expect("reduced set has at most 4 elements") as u32);
                }
            }
        }
    }
    let map = Arc::new(map);
    cache.lock().expect("alpha map cache poisoned").insert(n, map.clone());
    Ok(map)
}

/// Coefficients `c` of `g'(x_1..x_{n-1}) = ⟨x⊗4, W⟩|_{x_n = 1}` in the reduced
/// multilinear basis.
pub fn reduce_noise(w: &DenseTensor, n: usize) -> Result<Functional> {
    if w.order() != 4 || w.dim() != n {
        return invalid(format!(
            "expected an order-4 tensor of dimension {n}, got order {} dimension {}",
            w.order(),
            w.dim()
        ));
    }
    let map = alpha_map(n)?;
    let mut c = Functional::zeros(n - 1)?;
    for (&idx, &v) in map.iter().zip(w.data()) {
        c.values[idx as usize] += v;
    }
    Ok(c)
}

/// Diagonal of `E[ccᵀ]` for i.i.d. standard normal `W`, by subset size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseCov {
    pub n: usize,
    /// Tabulated values: `n`, `12n - 16`, `12n - 16`, `24`, `24`.
    pub tabulated: [f64; 5],
    /// Number of `α ∈ [n]⁴` reducing to a fixed subset of each size.
    pub enumerated: [f64; 5],
}

impl NoiseCov {
    /// Sizes whose tabulated and enumerated values differ.
    pub fn discrepancies(&self) -> Vec<usize> {
        (0..5).filter(|&s| self.tabulated[s] != self.enumerated[s]).collect()
    }

    /// Enumerated variance for every basis element.
    pub fn diagonal(&self, basis: &SubsetBasis) -> Vec<f64> {
        (0..basis.len()).map(|i| self.enumerated[basis.size_of(i)]).collect()
    }
}

pub fn noise_cov(n: usize) -> Result<NoiseCov> {
    if n < 8 {
        return invalid(format!("noise covariance needs n >= 8, got {n}"));
    }
    let map = alpha_map(n)?;
    let basis = SubsetBasis::shared(n - 1, 4)?;
    let mut counts = vec![0u64; basis.len()];
    for &i in map.iter() {
        counts[i as usize] += 1;
    }
    let mut enumerated = [0.0; 5];
    for (s, slot) in enumerated.iter_mut().enumerate() {
        let range = basis.size_range(s);
        let first = counts[range.start];
        debug_assert!(counts[range].iter().all(|&c| c == first));
        *slot = first as f64;
    }
    let nf = n as f64;
    Ok(NoiseCov { n, tabulated: [nf, 12.0 * nf - 16.0, 12.0 * nf - 16.0, 24.0, 24.0], enumerated })
}

/// Moment matrix `X[S, T] = ψ_{S ⊕ T}` over subsets of size at most 2.
#[derive(Debug, Clone)]
pub struct MomentMatrix {
    pub basis: Arc<SubsetBasis>,
    pub matrix: DMatrix<f64>,
}

/// Basis-4 index of `S ⊕ T` for every pair of the dmax-2 basis, row-major.
pub fn moment_index(m: usize) -> Result<Arc<Vec<u32>>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Vec<u32>>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(v) = cache.lock().expect("moment index cache poisoned").get(&m) {
        return Ok(v.clone());
    }
    let b2 = SubsetBasis::shared(m, 2)?;
    let b4 = SubsetBasis::shared(m, 4)?;
    let mut idx = Vec::with_capacity(b2.len() * b2.len());
    for &s in b2.subsets() {
        for &t in b2.subsets() {
            idx.push(b4.index_of(s ^ t).expect("symmetric difference of two pairs") as u32);
        }
    }
    let idx = Arc::new(idx);
    cache.lock().expect("moment index cache poisoned").insert(m, idx.clone());
    Ok(idx)
}

pub fn moment_matrix(psi: &Functional) -> Result<MomentMatrix> {
    let m = psi.m();
    let basis = SubsetBasis::shared(m, 2)?;
    let idx = moment_index(m)?;
    let k = basis.len();
    let matrix = DMatrix::from_fn(k, k, |i, j| psi.values[idx[i * k + j] as usize]);
    Ok(MomentMatrix { basis, matrix })
}

/// `Aψ`: entry `S` (for `|S| ≤ 3`) is `ψ[(1 + Σ_i x_i) x_S]`; rows of size 4 are zero.
pub fn apply_constraint(psi: &Functional) -> Vec<f64> {
    let basis = &psi.basis;
    let m = basis.m();
    (0..basis.len())
        .map(|i| {
            let s = basis.subset(i);
            if s.count_ones() > 3 {
                return 0.0;
            }
            psi.values[i] + (0..m).map(|j| psi.values[basis.index_of(s ^ (1 << j)).expect("within dmax")]).sum::<f64>()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub is_pseudoexpectation: bool,
    pub min_eig: f64,
    /// `‖Aψ‖_∞`.
    pub constraint_residual: f64,
    /// `|ψ_∅ - 1|`.
    pub unit_mass_error: f64,
}

/// Checks unit mass, the balance constraint and PSD-ness of the moment matrix
/// (tolerance `1e-8` relative to its spectral norm, floored at 1).
pub fn validate_pseudoexp(psi: &Functional) -> Result<ValidationReport> {
    let mm = moment_matrix(psi)?;
    let eig = sym_eigenvalues(&mm.matrix)?;
    let min_eig = eig[0];
    let scale = eig.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
    let constraint_residual = apply_constraint(psi).iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let unit_mass_error = (psi.values[0] - 1.0).abs();
    let is_pseudoexpectation = unit_mass_error <= 1e-12 && min_eig >= -1e-8 * scale && constraint_residual <= 1e-8;
    Ok(ValidationReport { is_pseudoexpectation, min_eig, constraint_residual, unit_mass_error })
}

/// `ψ[p] = cᵀψ` for the polynomial with coefficients `c`.
pub fn evaluate(psi: &Functional, c: &Functional) -> Result<f64> {
    psi.dot(c)
}
