//! The 55-dimensional algebra spanned by the orbit matrices `M^u_{s,t}` over
//! subsets of size at most 4, and its block diagonalization into full matrix
//! algebras of orders 5, 4, 3, 2, 1.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::basis::SubsetBasis;
use crate::error::{invalid, Error, Result};
use crate::linalg::{sym_eigenvalues, sym_pinv};
use crate::models::binomial;

pub const SLOTS: usize = 55;
/// Smallest ground set on which all 55 orbits are non-empty.
pub const MIN_GROUND: usize = 8;
/// Largest ground set for which dense matrices are materialized.
pub const DENSE_MAX_GROUND: usize = 16;

/// Slot index of `(s, t, u)`, or `None` if `u > min(s, t)`.
pub fn slot(s: usize, t: usize, u: usize) -> Option<usize> {
    static TABLE: OnceLock<[[[Option<usize>; 5]; 5]; 5]> = OnceLock::new();
    let table = TABLE.get_or_init(|| {
        let mut tab = [[[None; 5]; 5]; 5];
        let mut next = 0;
        for (s, row) in tab.iter_mut().enumerate() {
            for (t, cell) in row.iter_mut().enumerate() {
                for slot in cell.iter_mut().take(s.min(t) + 1) {
                    *slot = Some(next);
                    next += 1;
                }
            }
        }
        tab
    });
    if s > 4 || t > 4 || u > 4 {
        return None;
    }
    table[s][t][u]
}

/// All `(s, t, u)` triples in slot order.
pub fn triples() -> impl Iterator<Item = (usize, usize, usize)> {
    (0..5).flat_map(|s| (0..5).flat_map(move |t| (0..=s.min(t)).map(move |u| (s, t, u))))
}

fn check_ground(m: usize) -> Result<()> {
    if m < MIN_GROUND {
        return invalid(format!("the orbit algebra needs m >= {MIN_GROUND}, got {m}"));
    }
    Ok(())
}

/// `Σ x^u_{s,t} M^u_{s,t}` where `(M^u_{s,t})_{S,T} = 1` iff `|S| = s`,
/// `|T| = t` and `|S ∩ T| = u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgebraElement {
    pub m: usize,
    #[serde(with = "coeff_serde")]
    coeffs: [f64; SLOTS],
}

mod coeff_serde {
    use super::SLOTS;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(c: &[f64; SLOTS], s: S) -> Result<S::Ok, S::Error> {
        c.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[f64; SLOTS], D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        v.try_into().map_err(|v: Vec<f64>| serde::de::Error::invalid_length(v.len(), &"55 coefficients"))
    }
}

impl AlgebraElement {
    pub fn zero(m: usize) -> Self {
        Self { m, coeffs: [0.0; SLOTS] }
    }

    pub fn identity(m: usize) -> Self {
        let mut e = Self::zero(m);
        for s in 0..5 {
            e.set(s, s, s, 1.0);
        }
        e
    }

    pub fn from_coeffs(m: usize, coeffs: [f64; SLOTS]) -> Self {
        Self { m, coeffs }
    }

    pub fn coeffs(&self) -> &[f64; SLOTS] {
        &self.coeffs
    }

    pub fn get(&self, s: usize, t: usize, u: usize) -> f64 {
        slot(s, t, u).map_or(0.0, |i| self.coeffs[i])
    }

    pub fn set(&mut self, s: usize, t: usize, u: usize, v: f64) {
        let i = slot(s, t, u).expect("u must not exceed min(s, t)");
        self.coeffs[i] = v;
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zero(self.m);
        for (s, t, u) in triples() {
            out.set(t, s, u, self.get(s, t, u));
        }
        out
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        triples().all(|(s, t, u)| (self.get(s, t, u) - self.get(t, s, u)).abs() <= tol)
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut out = self.clone();
        out.coeffs.iter_mut().for_each(|c| *c *= a);
        out
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_ground(other)?;
        let mut out = self.clone();
        for (a, b) in out.coeffs.iter_mut().zip(&other.coeffs) {
            *a += b;
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scaled(-1.0))
    }

    fn check_same_ground(&self, other: &Self) -> Result<()> {
        if self.m != other.m {
            return invalid(format!("ground set mismatch: {} vs {}", self.m, other.m));
        }
        Ok(())
    }

    /// Matrix product, computed blockwise.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.check_same_ground(other)?;
        let a = block_diagonalize(self)?;
        let b = block_diagonalize(other)?;
        let blocks: Vec<DMatrix<f64>> = a.blocks.iter().zip(&b.blocks).map(|(x, y)| x * y).collect();
        from_blocks(self.m, &blocks)
    }

    /// `x ↦ (algebra_to_matrix(self)) x` over the dmax-4 basis without
    /// materializing the matrix.
    pub fn matvec(&self, basis: &SubsetBasis, v: &[f64]) -> Result<Vec<f64>> {
        if basis.m() != self.m || basis.dmax() != 4 || v.len() != basis.len() {
            return invalid("matvec needs the dmax-4 basis over the same ground set");
        }
        let subsets = basis.subsets();
        let mut out = vec![0.0; v.len()];
        for s in 0..5 {
            for i in basis.size_range(s) {
                let si = subsets[i];
                let mut acc = 0.0;
                for t in 0..5 {
                    let row: Vec<f64> = (0..=s.min(t)).map(|u| self.get(s, t, u)).collect();
                    if row.iter().all(|&c| c == 0.0) {
                        continue;
                    }
                    for j in basis.size_range(t) {
                        acc += row[(si & subsets[j]).count_ones() as usize] * v[j];
                    }
                }
                out[i] = acc;
            }
        }
        Ok(out)
    }
}

/// Dense matrix over the dmax-4 subset basis.
pub fn algebra_to_matrix(e: &AlgebraElement) -> Result<DMatrix<f64>> {
    check_ground(e.m)?;
    if e.m > DENSE_MAX_GROUND {
        return Err(Error::Capacity(format!(
            "dense algebra matrices are limited to m <= {DENSE_MAX_GROUND}, got {}",
            e.m
        )));
    }
    let basis = SubsetBasis::shared(e.m, 4)?;
    let sub = basis.subsets();
    let n = basis.len();
    Ok(DMatrix::from_fn(n, n, |i, j| {
        e.get(basis.size_of(i), basis.size_of(j), (sub[i] & sub[j]).count_ones() as usize)
    }))
}

/// Reads the orbit coefficients off a dense matrix, rejecting matrices that
/// are not constant on every orbit (tolerance `1e-10` relative to the largest
/// entry, floored at 1).
pub fn matrix_to_algebra(mat: &DMatrix<f64>, m: usize) -> Result<AlgebraElement> {
    check_ground(m)?;
    let basis = SubsetBasis::shared(m, 4)?;
    let n = basis.len();
    if mat.nrows() != n || mat.ncols() != n {
        return invalid(format!("expected a {n}x{n} matrix for m = {m}, got {}x{}", mat.nrows(), mat.ncols()));
    }
    let sub = basis.subsets();
    let mut lo = [f64::INFINITY; SLOTS];
    let mut hi = [f64::NEG_INFINITY; SLOTS];
    for i in 0..n {
        let s = basis.size_of(i);
        for j in 0..n {
            let k = slot(s, basis.size_of(j), (sub[i] & sub[j]).count_ones() as usize).unwrap();
            let v = mat[(i, j)];
            lo[k] = lo[k].min(v);
            hi[k] = hi[k].max(v);
        }
    }
    let scale = mat.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
    let (worst, spread) = (0..SLOTS).map(|k| (k, hi[k] - lo[k])).max_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
    if spread.is_nan() || spread > 1e-10 * scale {
        let (s, t, u) = triples().nth(worst).unwrap();
        return Err(Error::NotInAlgebra { s, t, u, spread });
    }
    let mut coeffs = [0.0; SLOTS];
    for k in 0..SLOTS {
        coeffs[k] = 0.5 * (lo[k] + hi[k]);
    }
    Ok(AlgebraElement { m, coeffs })
}

/// `β^u_{s,t,r} = Σ_p (-1)^{p-u} C(p,u) C(m-2r,p-r) C(m-r-p,s-p) C(m-r-p,t-p)`.
pub fn beta(m: usize, s: usize, t: usize, r: usize, u: usize) -> f64 {
    let c = |a: usize, b: usize| binomial(a, b) as f64;
    let mut total = 0.0;
    for p in r.max(u)..=s.min(t) {
        let sign = if (p - u).is_multiple_of(2) { 1.0 } else { -1.0 };
        total += sign * c(p, u) * c(m - 2 * r, p - r) * c(m - r - p, s - p) * c(m - r - p, t - p);
    }
    total
}

/// The linear isomorphism between orbit coefficients and block entries for a
/// fixed ground set. For each `(s, t)` it couples the coefficients
/// `x^u_{s,t}` (`u ≤ min(s,t)`) with the entries `B_r[s-r][t-r]`
/// (`r ≤ min(s,t)`) through a small square system.
#[derive(Debug)]
pub struct BlockMap {
    pub m: usize,
    /// `forward[s][t]` maps `(x^u)_u` to `(B_r[s-r][t-r])_r`.
    forward: Vec<Vec<DMatrix<f64>>>,
    inverse: Vec<Vec<DMatrix<f64>>>,
}

impl BlockMap {
    fn build(m: usize) -> Result<Self> {
        check_ground(m)?;
        let c = |a: usize, b: usize| binomial(a, b) as f64;
        let mut forward: Vec<Vec<DMatrix<f64>>> = (0..5).map(|_| Vec::with_capacity(5)).collect();
        let mut inverse: Vec<Vec<DMatrix<f64>>> = (0..5).map(|_| Vec::with_capacity(5)).collect();
        for s in 0..5 {
            for t in 0..5 {
                let d = s.min(t) + 1;
                let f = DMatrix::from_fn(d, d, |r, u| {
                    beta(m, s, t, r, u) / (c(m - 2 * r, s - r) * c(m - 2 * r, t - r)).sqrt()
                });
                let inv = f.clone().try_inverse().ok_or_else(|| {
                    Error::Numeric(format!("coefficient-to-block map is singular at (s={s}, t={t}), m={m}"))
                })?;
                let residual = (&f * &inv - DMatrix::identity(d, d)).amax();
                if residual.is_nan() || residual >= 1e-8 {
                    return Err(Error::Numeric(format!(
                        "coefficient-to-block map is ill-conditioned at (s={s}, t={t}), m={m}: residual {residual:e}"
                    )));
                }
                forward[s].push(f);
                inverse[s].push(inv);
            }
        }
        Ok(Self { m, forward, inverse })
    }

    /// Shared per-`m` instance.
    pub fn shared(m: usize) -> Result<Arc<BlockMap>> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<BlockMap>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(Default::default);
        if let Some(b) = cache.lock().expect("block map cache poisoned").get(&m) {
            return Ok(b.clone());
        }
        let b = Arc::new(BlockMap::build(m)?);
        cache.lock().expect("block map cache poisoned").insert(m, b.clone());
        Ok(b)
    }
}

/// The blocks `B_0, .., B_4` (orders 5, 4, 3, 2, 1) of an algebra element,
/// with `B_r` repeated `C(m,r) - C(m,r-1)` times in the full matrix.
#[derive(Debug, Clone)]
pub struct BlockSpectrum {
    pub m: usize,
    pub blocks: Vec<DMatrix<f64>>,
    pub multiplicities: [u64; 5],
}

pub fn multiplicities(m: usize) -> [u64; 5] {
    let mut out = [0; 5];
    for (r, slot) in out.iter_mut().enumerate() {
        *slot = binomial(m, r) - if r > 0 { binomial(m, r - 1) } else { 0 };
    }
    out
}

impl BlockSpectrum {
    /// Eigenvalues of the symmetric blocks with their multiplicities.
    pub fn eigenvalues(&self) -> Result<Vec<(f64, u64)>> {
        let mut out = Vec::new();
        for (b, &mult) in self.blocks.iter().zip(&self.multiplicities) {
            let asym = (b - b.transpose()).amax();
            if asym > 1e-9 * b.amax().max(1.0) {
                return invalid("block eigenvalues require a symmetric element");
            }
            for v in sym_eigenvalues(&((b + b.transpose()) * 0.5))? {
                out.push((v, mult));
            }
        }
        out.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(out)
    }

    /// All eigenvalues of the full matrix, ascending, each repeated by
    /// multiplicity.
    pub fn expanded_eigenvalues(&self) -> Result<Vec<f64>> {
        let mut out = Vec::new();
        for (v, mult) in self.eigenvalues()? {
            out.extend(std::iter::repeat_n(v, mult as usize));
        }
        Ok(out)
    }

    pub fn to_element(&self) -> Result<AlgebraElement> {
        from_blocks(self.m, &self.blocks)
    }
}

pub fn block_diagonalize(e: &AlgebraElement) -> Result<BlockSpectrum> {
    let map = BlockMap::shared(e.m)?;
    let mut blocks: Vec<DMatrix<f64>> = (0..5).map(|r| DMatrix::zeros(5 - r, 5 - r)).collect();
    for s in 0..5 {
        for t in 0..5 {
            let d = s.min(t) + 1;
            let x = nalgebra::DVector::from_fn(d, |u, _| e.get(s, t, u));
            let y = &map.forward[s][t] * x;
            for r in 0..d {
                blocks[r][(s - r, t - r)] = y[r];
            }
        }
    }
    Ok(BlockSpectrum { m: e.m, blocks, multiplicities: multiplicities(e.m) })
}

/// Inverse of [`block_diagonalize`].
pub fn from_blocks(m: usize, blocks: &[DMatrix<f64>]) -> Result<AlgebraElement> {
    if blocks.len() != 5 || blocks.iter().enumerate().any(|(r, b)| b.nrows() != 5 - r || b.ncols() != 5 - r) {
        return invalid("expected five blocks of orders 5, 4, 3, 2, 1");
    }
    let map = BlockMap::shared(m)?;
    let mut out = AlgebraElement::zero(m);
    for s in 0..5 {
        for t in 0..5 {
            let d = s.min(t) + 1;
            let y = nalgebra::DVector::from_fn(d, |r, _| blocks[r][(s - r, t - r)]);
            let x = &map.inverse[s][t] * y;
            for u in 0..d {
                out.set(s, t, u, x[u]);
            }
        }
    }
    Ok(out)
}

/// Moore-Penrose pseudo-inverse of a symmetric element, blockwise with a
/// `1e-10` relative cutoff per block.
pub fn algebra_pseudoinverse(e: &AlgebraElement) -> Result<AlgebraElement> {
    if !e.is_symmetric(1e-12 * e.coeffs.iter().fold(1.0_f64, |a, c| a.max(c.abs()))) {
        return invalid("pseudo-inverse requires a symmetric element");
    }
    let spec = block_diagonalize(e)?;
    let inv: Vec<DMatrix<f64>> =
        spec.blocks.iter().map(|b| sym_pinv(&((b + b.transpose()) * 0.5), 1e-10)).collect::<Result<_>>()?;
    let out = from_blocks(e.m, &inv)?;
    if out.coeffs.iter().any(|c| !c.is_finite()) {
        return Err(Error::Numeric("pseudo-inverse produced non-finite coefficients".into()));
    }
    Ok(out)
}

/// Constraint element `A` whose row at `S` encodes `ψ[(1 + Σ x_i) x_S] = 0`.
pub fn constraint_a(m: usize) -> Result<AlgebraElement> {
    check_ground(m)?;
    let mut a = AlgebraElement::zero(m);
    a.set(0, 0, 0, 1.0);
    a.set(0, 1, 0, 1.0);
    for s in 1..=3 {
        a.set(s, s - 1, s - 1, 1.0);
        a.set(s, s, s, 1.0);
        a.set(s, s + 1, s, 1.0);
    }
    Ok(a)
}

/// Dense `A` over the dmax-4 basis, built row by row from its definition.
pub fn constraint_a_dense(m: usize) -> Result<DMatrix<f64>> {
    check_ground(m)?;
    let basis = SubsetBasis::shared(m, 4)?;
    let n = basis.len();
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        let s = basis.subset(i);
        if s.count_ones() > 3 {
            continue;
        }
        a[(i, i)] += 1.0;
        for j in 0..m {
            let idx = basis.index_of(s ^ (1 << j)).expect("neighbour within dmax");
            a[(i, idx)] += 1.0;
        }
    }
    Ok(a)
}

/// Whether the projector is formed with the orbit algebra or densely.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectorMode {
    Algebra,
    Dense,
}

#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum Projector {
    Algebra(AlgebraElement),
    Dense(DMatrix<f64>),
}

/// Largest ground set for the dense projector oracle.
pub const DENSE_PROJECTOR_MAX_GROUND: usize = 12;

/// `Π = I - Aᵀ(AAᵀ)⁺A`.
pub fn projector(m: usize, mode: ProjectorMode) -> Result<Projector> {
    match mode {
        ProjectorMode::Algebra => projector_algebra(m).map(Projector::Algebra),
        ProjectorMode::Dense => {
            if m > DENSE_PROJECTOR_MAX_GROUND {
                return Err(Error::Capacity(format!(
                    "dense projector is limited to m <= {DENSE_PROJECTOR_MAX_GROUND}, got {m}"
                )));
            }
            let a = constraint_a_dense(m)?;
            let n = a.nrows();
            let inner = sym_pinv(&(&a * a.transpose()), 1e-10)?;
            Ok(Projector::Dense(DMatrix::identity(n, n) - a.transpose() * inner * a))
        }
    }
}

pub fn projector_algebra(m: usize) -> Result<AlgebraElement> {
    let a = constraint_a(m)?;
    let at = a.transpose();
    let inner = algebra_pseudoinverse(&a.mul(&at)?)?;
    AlgebraElement::identity(m).sub(&at.mul(&inner)?.mul(&a)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slot_layout() {
        assert_eq!(triples().count(), SLOTS);
        for (k, (s, t, u)) in triples().enumerate() {
            assert_eq!(slot(s, t, u), Some(k));
        }
        assert_eq!(slot(1, 2, 2), None);
    }

    #[test]
    fn beta_base_case() {
        for m in 8..20 {
            assert_eq!(beta(m, 0, 0, 0, 0), 1.0);
        }
    }

    #[test]
    fn identity_blocks() {
        let spec = block_diagonalize(&AlgebraElement::identity(11)).unwrap();
        for (r, b) in spec.blocks.iter().enumerate() {
            assert!((b - DMatrix::<f64>::identity(5 - r, 5 - r)).amax() < 1e-12);
        }
    }

    #[test]
    fn multiplicities_cover_basis() {
        for m in 8..=20 {
            let mult = multiplicities(m);
            let total: u64 = mult.iter().enumerate().map(|(r, &k)| k * (5 - r) as u64).sum();
            let n: u64 = (0..=4).map(|j| binomial(m, j)).sum();
            assert_eq!(total, n);
        }
    }

    #[test]
    fn constraint_has_eleven_unit_slots() {
        let a = constraint_a(12).unwrap();
        let nz: Vec<f64> = a.coeffs().iter().copied().filter(|&c| c != 0.0).collect();
        assert_eq!(nz.len(), 11);
        assert!(nz.iter().all(|&c| c == 1.0));
    }

    #[test]
    fn small_ground_rejected() {
        assert!(constraint_a(7).is_err());
        assert!(block_diagonalize(&AlgebraElement::identity(7)).is_err());
    }
}
