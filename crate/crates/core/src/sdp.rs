//! The bisection SDP
//!
//! ```text
//! maximize ⟨Q, X⟩  subject to  X_ii = 1,  ⟨X, 𝟏𝟏ᵀ⟩ = 0,  X ⪰ 0,
//! ```
//!
//! an ADMM solver for it, and the Laplacian dual certificate that proves a
//! candidate `yyᵀ` is its unique optimum.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{invalid, Error, Result};
use crate::estimators::{spectral_round, QMatrix};
use crate::linalg::{check_square, sym_eigen, sym_eigenvalues, sym_norm, symmetrize};
use crate::tensor::{flatten4, DenseTensor, SpikeVector};

pub const SDP_MAX_N: usize = 128;

/// `ℒ(M) = diag(M𝟏) - M`.
pub fn laplacian(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_square(m)?;
    let row_sums = m.column_sum();
    Ok(DMatrix::from_diagonal(&row_sums) - m)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SdpOptions {
    /// Tolerance on the relative primal and dual residuals.
    pub tol: f64,
    pub max_iter: usize,
    /// Initial penalty; `None` uses `‖Q‖_F / n`.
    pub rho: Option<f64>,
    /// Iterations between penalty rebalancing; 0 disables it.
    pub balance_every: usize,
    pub time_limit: Option<Duration>,
    /// Start from the spectral rounding of `Q`.
    pub warm_start: bool,
}

impl Default for SdpOptions {
    fn default() -> Self {
        Self { tol: 1e-6, max_iter: 5000, rho: None, balance_every: 100, time_limit: None, warm_start: true }
    }
}

#[derive(Debug, Clone)]
pub struct SdpResult {
    /// Affine-feasible iterate: exact unit diagonal and zero total sum.
    pub x: DMatrix<f64>,
    pub objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub timed_out: bool,
}

impl SdpResult {
    /// Scalar summary; the matrix is included only on request.
    pub fn to_json(&self, include_matrix: bool) -> serde_json::Value {
        let mut v = json!({
            "objective": self.objective,
            "primal_residual": self.primal_residual,
            "dual_residual": self.dual_residual,
            "iterations": self.iterations,
            "converged": self.converged,
            "timed_out": self.timed_out,
        });
        if include_matrix {
            let rows: Vec<Vec<f64>> = self.x.row_iter().map(|r| r.iter().copied().collect()).collect();
            v["x"] = json!(rows);
        }
        v
    }

    /// `‖X - yyᵀ‖_F / n`.
    pub fn distance_to(&self, y: &SpikeVector) -> f64 {
        let v = DVector::from_vec(y.to_f64());
        (&self.x - &v * v.transpose()).norm() / y.len() as f64
    }
}

/// Projects a symmetric matrix onto `{X : diag(X) = 𝟏, 𝟏ᵀX𝟏 = 0}`.
fn project_affine(y: &mut DMatrix<f64>) {
    let n = y.nrows();
    let nf = n as f64;
    let rd: Vec<f64> = (0..n).map(|i| y[(i, i)] - 1.0).collect();
    let rs = y.sum();
    let mu = (rs - rd.iter().sum::<f64>()) / (nf * nf - nf);
    y.add_scalar_mut(-mu);
    for (i, r) in rd.iter().enumerate() {
        y[(i, i)] -= r - mu;
    }
}

fn project_psd(y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = sym_eigen(y)?;
    let n = y.nrows();
    let mut out = DMatrix::zeros(n, n);
    for (i, &lam) in eig.values.iter().enumerate() {
        if lam > 0.0 {
            let v = eig.vectors.column(i);
            out.ger(lam, &v, &v, 1.0);
        }
    }
    Ok(out)
}

/// Solves the bisection SDP by ADMM on the splitting `X = Z`, with `X`
/// restricted to the affine constraints and `Z` to the PSD cone.
///
/// Never fails silently: if the residuals do not reach `opts.tol` the result
/// carries `converged = false`.
pub fn solve_sdp(q: &QMatrix, opts: &SdpOptions) -> Result<SdpResult> {
    let n = q.n();
    if n < 2 || n % 2 == 1 {
        return invalid(format!("the SDP needs an even n >= 2, got {n}"));
    }
    if n > SDP_MAX_N {
        return Err(Error::Capacity(format!("the SDP solver supports n <= {SDP_MAX_N}, got {n}")));
    }
    let qm = &q.matrix;
    let qnorm = qm.norm();
    let mut rho = opts.rho.unwrap_or(if qnorm > 0.0 { qnorm / n as f64 } else { 1.0 });
    if !(rho.is_finite() && rho > 0.0) {
        return invalid(format!("ADMM penalty must be positive, got {rho}"));
    }

    let mut z = if opts.warm_start {
        let v = DVector::from_vec(spectral_round(q)?.to_f64());
        &v * v.transpose()
    } else {
        DMatrix::identity(n, n)
    };
    let mut u = DMatrix::<f64>::zeros(n, n);
    let mut x = z.clone();
    let start = Instant::now();
    let (mut primal, mut dual) = (f64::INFINITY, f64::INFINITY);
    let mut converged = false;
    let mut timed_out = false;
    let mut iterations = 0;

    for it in 1..=opts.max_iter {
        iterations = it;
        x = &z - &u + qm / rho;
        project_affine(&mut x);
        let z_prev = std::mem::replace(&mut z, project_psd(&symmetrize(&(&x + &u)))?);
        u += &x - &z;

        let scale_p = x.norm().max(z.norm()).max(1.0);
        primal = (&x - &z).norm() / scale_p;
        dual = rho * (&z - &z_prev).norm() / (rho * u.norm()).max(1.0);
        if primal <= opts.tol && dual <= opts.tol {
            converged = true;
            break;
        }
        if opts.balance_every > 0 && it % opts.balance_every == 0 {
            if primal > 10.0 * dual {
                rho *= 2.0;
                u /= 2.0;
            } else if dual > 10.0 * primal {
                rho /= 2.0;
                u *= 2.0;
            }
        }
        if opts.time_limit.is_some_and(|lim| start.elapsed() > lim) {
            timed_out = true;
            break;
        }
    }
    let objective = qm.component_mul(&x).sum();
    Ok(SdpResult { x, objective, primal_residual: primal, dual_residual: dual, iterations, converged, timed_out })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertifyOptions {
    /// Required spectral gap, relative to `‖Q‖₂`.
    pub margin: f64,
    /// Allowed negative eigenvalue, relative to `‖Q‖₂`.
    pub psd_tol: f64,
    /// Minimum `|cos|` between the bottom eigenvector and the forced kernel.
    pub alignment: f64,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self { margin: 1e-6, psd_tol: 1e-8, alignment: 1.0 - 1e-6 }
    }
}

/// Dual certificate report for a candidate labeling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    /// Weight of the lifting term on the balance-constraint direction.
    pub lambda: f64,
    /// Second-smallest eigenvalue of the certificate matrix.
    pub lambda2: f64,
    pub min_eigenvalue: f64,
    /// Eigenvalues within `margin · scale` of zero.
    pub kernel_dim: usize,
    /// `|cos|` between the bottom eigenvector and the forced kernel.
    pub kernel_alignment: f64,
    /// `‖S𝟏‖ / scale` in conjugated coordinates.
    pub kernel_residual: f64,
    /// `‖(D - Q + λ𝟏𝟏ᵀ) y‖ / scale` in the original coordinates.
    pub laplacian_residual: f64,
    /// `‖Q‖₂`.
    pub scale: f64,
    pub margin: f64,
    pub valid: bool,
}

/// Certifies `yyᵀ` as the unique optimum of the SDP with objective `Q`.
pub fn certify(q: &QMatrix, y: &SpikeVector) -> Result<Certificate> {
    certify_with(q, y, &CertifyOptions::default())
}

pub fn certify_with(q: &QMatrix, y: &SpikeVector, opts: &CertifyOptions) -> Result<Certificate> {
    if !y.is_balanced() {
        return invalid("certify needs a balanced candidate");
    }
    if y.len() != q.n() {
        return invalid(format!("candidate length {} does not match n = {}", y.len(), q.n()));
    }
    certify_conjugated(&q.matrix, y.entries(), true, opts)
}

/// Certificate for the `n² × n²` unfolding with candidate `vec(yyᵀ)` and no
/// balance constraint.
pub fn flatten_certify(t: &DenseTensor, y: &SpikeVector) -> Result<Certificate> {
    flatten_certify_with(t, y, &CertifyOptions::default())
}

pub fn flatten_certify_with(t: &DenseTensor, y: &SpikeVector, opts: &CertifyOptions) -> Result<Certificate> {
    let n = t.dim();
    if y.len() != n {
        return invalid(format!("candidate length {} does not match n = {n}", y.len()));
    }
    let flat = symmetrize(&flatten4(t)?);
    let lifted: Vec<i8> = (0..n * n).map(|a| y.get(a / n) * y.get(a % n)).collect();
    certify_conjugated(&flat, &lifted, false, opts)
}

/// Builds `S = ℒ(diag(y) Q diag(y)) + λ yyᵀ` and checks that it is PSD with
/// kernel exactly `𝟏`.
fn certify_conjugated(q: &DMatrix<f64>, y: &[i8], lift: bool, opts: &CertifyOptions) -> Result<Certificate> {
    let n = q.nrows();
    let yv = DVector::from_iterator(n, y.iter().map(|&e| e as f64));
    let conj = DMatrix::from_fn(n, n, |i, j| q[(i, j)] * yv[i] * yv[j]);
    let m = laplacian(&conj)?;
    let scale = sym_norm(q)?;

    let lambda = if lift { 2.0 * sym_norm(&m)? / n as f64 } else { 0.0 };
    let mut s = m;
    if lift {
        s.ger(lambda, &yv, &yv, 1.0);
    }
    let eig = sym_eigen(&s)?;
    let ones = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let min_eigenvalue = eig.values[0];
    let lambda2 = if n > 1 { eig.values[1] } else { f64::INFINITY };
    let kernel_alignment = eig.vectors.column(0).dot(&ones).abs();
    let tol = opts.margin * scale;
    let kernel_dim = eig.values.iter().filter(|v| v.abs() <= tol).count();

    let denom = if scale > 0.0 { scale } else { 1.0 };
    let kernel_residual = (&s * &ones).norm() * (n as f64).sqrt() / denom;
    let dq = DMatrix::from_diagonal(&DVector::from_fn(n, |i, _| (0..n).map(|j| q[(i, j)] * yv[i] * yv[j]).sum()));
    let mut orig = dq - q;
    if lift {
        orig.add_scalar_mut(lambda);
    }
    let laplacian_residual = (&orig * &yv).norm() / denom;

    let valid = scale > 0.0
        && min_eigenvalue >= -opts.psd_tol * scale
        && lambda2 > opts.margin * scale
        && kernel_alignment >= opts.alignment;
    Ok(Certificate {
        lambda,
        lambda2,
        min_eigenvalue,
        kernel_dim,
        kernel_alignment,
        kernel_residual,
        laplacian_residual,
        scale,
        margin: opts.margin,
        valid,
    })
}

/// Spectrum of `ℒ(diag(y) Q diag(y))` compressed to the orthogonal complement
/// of `𝟏` and `y`, ascending.
pub fn restricted_spectrum(q: &QMatrix, y: &SpikeVector) -> Result<Vec<f64>> {
    if !y.is_balanced() || y.len() != q.n() {
        return invalid("restricted_spectrum needs a balanced candidate of matching length");
    }
    let n = q.n();
    let yv = DVector::from_vec(y.to_f64());
    let conj = DMatrix::from_fn(n, n, |i, j| q.matrix[(i, j)] * yv[i] * yv[j]);
    let m = laplacian(&conj)?;
    let basis = complement_basis(n, &[DVector::from_element(n, 1.0), yv]);
    let compressed = basis.transpose() * m * &basis;
    sym_eigenvalues(&symmetrize(&compressed))
}

/// Orthonormal basis of the complement of `span(dirs)`, by Gram-Schmidt over
/// the standard basis.
fn complement_basis(n: usize, dirs: &[DVector<f64>]) -> DMatrix<f64> {
    let mut kept: Vec<DVector<f64>> = Vec::new();
    for d in dirs {
        let mut v = d.clone();
        for b in &kept {
            v -= b * b.dot(&v);
        }
        kept.push(v.normalize());
    }
    let fixed = kept.len();
    for i in 0..n {
        let mut v = DVector::zeros(n);
        v[i] = 1.0;
        for b in &kept {
            v -= b * b.dot(&v);
        }
        if v.norm() > 1e-8 {
            kept.push(v.normalize());
        }
    }
    DMatrix::from_columns(&kept[fixed..])
}
