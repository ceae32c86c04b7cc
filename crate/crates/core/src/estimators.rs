//! Recovery algorithms: brute-force maximum likelihood, degree-2 truncation,
//! the multigraph reduction, spectral rounding and tensor unfolding.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{check_square, max_abs, sym_eigen, symmetrize};
use crate::models::Hypergraph;
use crate::tensor::{flatten4, DenseTensor, SpikeVector};

/// Largest `n` accepted by [`mle_bruteforce`].
pub const MLE_MAX_N: usize = 22;

/// Symmetric `n × n` matrix obtained by truncating a likelihood to degree 2.
#[derive(Debug, Clone, PartialEq)]
pub struct QMatrix {
    pub matrix: DMatrix<f64>,
    /// Order of the tensor the matrix was truncated from.
    pub k: usize,
}

impl QMatrix {
    /// Wraps a square matrix, replacing it by its symmetric part.
    pub fn new(matrix: DMatrix<f64>, k: usize) -> Result<Self> {
        check_square(&matrix)?;
        Ok(Self { matrix: symmetrize(&matrix), k })
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }
}

/// Which signal template the likelihood is taken against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Signal {
    /// Equal-sign tensor `x⊛k`.
    Eq,
    /// Rank-one tensor `x⊗k`.
    Rank1,
}

/// Exhaustive maximizer of `⟨lift(x), T⟩` over `x` with `x₀ = +1`.
///
/// Among tied maximizers the lexicographically smallest (with `-1 < +1`) is
/// returned.
pub fn mle_bruteforce(t: &DenseTensor, k: usize, signal: Signal, balanced: bool) -> Result<SpikeVector> {
    if t.order() != k {
        return invalid(format!("tensor order {} does not match k = {k}", t.order()));
    }
    let n = t.dim();
    if n > MLE_MAX_N {
        return Err(Error::Capacity(format!("brute-force MLE supports n <= {MLE_MAX_N}, got {n}")));
    }
    if balanced && n % 2 == 1 {
        return invalid(format!("balanced prior needs an even n, got {n}"));
    }
    let monomials = likelihood_polynomial(t, signal);

    let free = n - 1;
    let free_mask: u32 = (1u32 << free) - 1;
    let value = |plus: u32| -> f64 {
        let neg = !plus & free_mask;
        monomials.iter().map(|&(m, c)| if (m & neg).count_ones() & 1 == 1 { -c } else { c }).sum()
    };

    let mut best: Option<(f64, u32)> = None;
    let mut consider = |plus: u32| {
        let v = value(plus);
        if best.is_none_or(|(b, _)| v > b) {
            best = Some((v, plus));
        }
    };
    if balanced {
        for plus in SameWeight::new(free, n / 2 - 1) {
            consider(plus);
        }
    } else {
        for plus in 0..=free_mask {
            consider(plus);
        }
    }
    let (_, plus) = best.expect("candidate set is non-empty");
    let entries = (0..n).map(|i| if i == 0 || plus >> (n - 1 - i) & 1 == 1 { 1 } else { -1 }).collect();
    SpikeVector::new(entries)
}

/// Multilinear coefficients of `x ↦ ⟨lift(x), T⟩`. Position `i` of `x` is bit
/// `n - 1 - i` of a monomial mask, so that numeric order of the free bits
/// matches lexicographic order of `x₁..x_{n-1}`.
fn likelihood_polynomial(t: &DenseTensor, signal: Signal) -> Vec<(u32, f64)> {
    let n = t.dim();
    let k = t.order();
    let mut coeff = vec![0.0f64; 1usize << n];
    let even_subsets: Vec<u32> = (0u32..1 << k).filter(|e| e.count_ones() % 2 == 0).collect();
    let weight = 2f64.powi(1 - k as i32);
    let mut bits = vec![0u32; k];
    t.for_each(|idx, v| {
        if v == 0.0 {
            return;
        }
        for (b, &i) in bits.iter_mut().zip(idx) {
            *b = 1 << (n - 1 - i);
        }
        match signal {
            Signal::Rank1 => coeff[bits.iter().fold(0, |a, b| a ^ b) as usize] += v,
            Signal::Eq => {
                for &e in &even_subsets {
                    let mut m = 0u32;
                    for (s, b) in bits.iter().enumerate() {
                        if e >> s & 1 == 1 {
                            m ^= b;
                        }
                    }
                    coeff[m as usize] += weight * v;
                }
            }
        }
    });
    coeff.into_iter().enumerate().filter(|&(_, c)| c != 0.0).map(|(m, c)| (m as u32, c)).collect()
}

/// Masks over `bits` bits with exactly `weight` ones, in increasing order.
struct SameWeight {
    next: Option<u32>,
    limit: u32,
}

impl SameWeight {
    fn new(bits: usize, weight: usize) -> Self {
        Self { next: Some((1u32 << weight) - 1), limit: 1u32 << bits }
    }
}

impl Iterator for SameWeight {
    type Item = u32;
    fn next(&mut self) -> Option<u32> {
        let v = self.next?;
        if v >= self.limit {
            self.next = None;
            return None;
        }
        self.next = if v == 0 {
            None
        } else {
            // Gosper's hack.
            let t = v | (v - 1);
            Some((t + 1) | (((!t & (t + 1)) - 1) >> (v.trailing_zeros() + 1)))
        };
        Some(v)
    }
}

/// Degree-2 truncation of an order-`k` tensor:
/// `Q_ij = ½ Σ_{s<t} (Σ_{α_s=i, α_t=j} T_α + Σ_{α_s=j, α_t=i} T_α)`.
pub fn truncate_to_q(t: &DenseTensor, k: usize) -> Result<QMatrix> {
    if t.order() != k {
        return invalid(format!("tensor order {} does not match k = {k}", t.order()));
    }
    let n = t.dim();
    let mut q = vec![0.0f64; n * n];
    t.for_each(|idx, v| {
        let h = 0.5 * v;
        for s in 0..k {
            for u in s + 1..k {
                let (i, j) = (idx[s], idx[u]);
                q[i * n + j] += h;
                q[j * n + i] += h;
            }
        }
    });
    Ok(QMatrix { matrix: DMatrix::from_row_slice(n, n, &q), k })
}

/// Pair contraction `M_ij = Σ_l T_ijll` of an order-4 tensor, symmetrized.
///
/// Used for the rank-one model, where the degree-2 truncation of `y⊗4`
/// vanishes for balanced `y`.
pub fn pair_contraction(t: &DenseTensor) -> Result<QMatrix> {
    if t.order() != 4 {
        return invalid(format!("pair contraction needs an order-4 tensor, got order {}", t.order()));
    }
    let n = t.dim();
    let m = DMatrix::from_fn(n, n, |i, j| (0..n).map(|l| t.get(&[i, j, l, l])).sum::<f64>());
    QMatrix::new(m, 4)
}

/// `A_ij` = number of hyperedges containing both `i` and `j`.
pub fn multigraph_adjacency(h: &Hypergraph) -> DMatrix<u32> {
    let mut a = DMatrix::<u32>::zeros(h.n, h.n);
    for e in &h.edges {
        for s in 0..4 {
            for t in s + 1..4 {
                a[(e[s], e[t])] += 1;
                a[(e[t], e[s])] += 1;
            }
        }
    }
    a
}

/// Top eigenvector of `PQP` with `P = I - 𝟏𝟏ᵀ/n`, sign-rounded and balanced.
///
/// If `PQP` vanishes the result is the first-half-positive vector.
pub fn spectral_round(q: &QMatrix) -> Result<SpikeVector> {
    round_projected(&q.matrix)
}

fn round_projected(m: &DMatrix<f64>) -> Result<SpikeVector> {
    check_square(m)?;
    let n = m.nrows();
    if n < 2 || n % 2 == 1 {
        return invalid(format!("spectral rounding needs an even n >= 2, got {n}"));
    }
    let p = DMatrix::<f64>::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64);
    let pmp = symmetrize(&(&p * m * &p));
    if max_abs(&pmp) <= 1e-12 * max_abs(m).max(f64::MIN_POSITIVE) {
        return SpikeVector::halves(n);
    }
    let (_, v) = sym_eigen(&pmp)?.top();
    Ok(round_balanced(v.as_slice()))
}

/// Signs of `v` (zero counts as `+1`), then flips the least-confident entries
/// of the majority sign until balanced; canonical first entry `+1`.
pub fn round_balanced(v: &[f64]) -> SpikeVector {
    let n = v.len();
    let mut x: Vec<i8> = v.iter().map(|&a| if a >= 0.0 { 1 } else { -1 }).collect();
    let plus = x.iter().filter(|&&e| e == 1).count();
    if plus != n / 2 {
        let majority: i8 = if plus > n / 2 { 1 } else { -1 };
        let excess = plus.abs_diff(n - plus) / 2;
        let mut order: Vec<usize> = (0..n).filter(|&i| x[i] == majority).collect();
        order.sort_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs()).then(a.cmp(&b)));
        for &i in order.iter().take(excess) {
            x[i] = -majority;
        }
    }
    SpikeVector::new(x).expect("entries are ±1").canonical()
}

/// Spectral recovery from the symmetrized `n² × n²` unfolding.
///
/// The top eigenvector is reshaped to `n × n` with its sign fixed so that the
/// trace is non-negative, then rounded as in [`spectral_round`].
pub fn unfold_recover(t: &DenseTensor) -> Result<SpikeVector> {
    let n = t.dim();
    let flat = symmetrize(&flatten4(t)?);
    let (_, mut u) = sym_eigen(&flat)?.top();
    let trace: f64 = (0..n).map(|i| u[i * n + i]).sum();
    if trace < 0.0 {
        u.neg_mut();
    }
    let reshaped = DMatrix::from_row_slice(n, n, u.as_slice());
    round_projected(&symmetrize(&reshaped))
}

/// Overlap-maximizing helper used by tests and sweeps: `|x̂ᵀy| / n`.
pub fn overlap(estimate: &SpikeVector, truth: &SpikeVector) -> f64 {
    estimate.overlap(truth)
}

/// `⟨Q, xxᵀ⟩`.
pub fn quadratic_form(q: &DMatrix<f64>, x: &SpikeVector) -> f64 {
    let v = DVector::from_vec(x.to_f64());
    v.dot(&(q * &v))
}
