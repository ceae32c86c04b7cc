//! Small helpers over `nalgebra` dense symmetric matrices.

use nalgebra::{DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigendecomposition of a symmetric matrix with eigenvalues sorted ascending
/// and eigenvectors permuted to match.
#[derive(Debug, Clone)]
pub struct SortedEigen {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl SortedEigen {
    pub fn top(&self) -> (f64, DVector<f64>) {
        let last = self.values.len() - 1;
        (self.values[last], self.vectors.column(last).into_owned())
    }
}

/// `nalgebra`'s implicit QR can produce NaN on exactly block-structured
/// inputs at machine-epsilon tolerance; slightly looser tolerances avoid it.
fn raw_eigen(m: &DMatrix<f64>) -> Result<SymmetricEigen<f64, Dyn>> {
    for eps in [f64::EPSILON, 1e-15, 1e-14, 1e-13] {
        if let Some(eig) = SymmetricEigen::try_new(m.clone(), eps, 0) {
            if eig.eigenvalues.iter().all(|v| v.is_finite()) && eig.eigenvectors.iter().all(|v| v.is_finite()) {
                return Ok(eig);
            }
        }
    }
    Err(Error::Numeric("symmetric eigensolver produced non-finite values".into()))
}

pub fn sym_eigen(m: &DMatrix<f64>) -> Result<SortedEigen> {
    check_square(m)?;
    let eig = raw_eigen(m)?;
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(SortedEigen { values, vectors })
}

/// Eigenvalues only, ascending.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    check_square(m)?;
    let mut vals: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    if vals.iter().any(|v| !v.is_finite()) {
        vals = raw_eigen(m)?.eigenvalues.iter().copied().collect();
    }
    vals.sort_by(f64::total_cmp);
    Ok(vals)
}

/// Spectral norm of a symmetric matrix.
pub fn sym_norm(m: &DMatrix<f64>) -> Result<f64> {
    let vals = sym_eigenvalues(m)?;
    Ok(vals.iter().fold(0.0_f64, |acc, v| acc.max(v.abs())))
}

/// Moore-Penrose pseudo-inverse of a symmetric matrix; eigenvalues below
/// `rel_cutoff * max|eigenvalue|` are treated as zero.
pub fn sym_pinv(m: &DMatrix<f64>, rel_cutoff: f64) -> Result<DMatrix<f64>> {
    let eig = sym_eigen(m)?;
    let scale = eig.values.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let n = m.nrows();
    let mut out = DMatrix::zeros(n, n);
    if scale == 0.0 {
        return Ok(out);
    }
    for (i, &lam) in eig.values.iter().enumerate() {
        if lam.abs() > rel_cutoff * scale {
            let v = eig.vectors.column(i);
            out += (v * v.transpose()) / lam;
        }
    }
    Ok(out)
}

/// Numerical rank from singular values relative to the largest one.
pub fn rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    let sv = m.singular_values();
    let top = sv.iter().fold(0.0_f64, |acc, v| acc.max(*v));
    if top == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * top).count()
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn check_square(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::InvalidArgument(format!("expected a square matrix, got {}x{}", m.nrows(), m.ncols())));
    }
    Ok(())
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_is_sorted_and_consistent() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 4.0]);
        let e = sym_eigen(&m).unwrap();
        assert!(e.values[0] <= e.values[1] && e.values[1] <= e.values[2]);
        for i in 0..3 {
            let v = e.vectors.column(i);
            let r = &m * v - v * e.values[i];
            assert!(r.norm() < 1e-12);
        }
    }

    #[test]
    fn pinv_of_rank_one() {
        let v = DVector::from_vec(vec![1.0, 2.0, 2.0]);
        let m = &v * v.transpose();
        let p = sym_pinv(&m, 1e-10).unwrap();
        let back = &m * &p * &m;
        assert!((back - &m).norm() < 1e-12);
        assert_eq!(rank(&m, 1e-10), 1);
    }
}
