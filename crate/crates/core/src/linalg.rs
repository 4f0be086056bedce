//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// Regularization scale: `1e-6 * trace / dim`, floored so an all-zero
/// matrix still gets a positive ridge.
pub fn ridge(m: &DMatrix<f64>) -> f64 {
    let d = m.nrows().max(1) as f64;
    let eps = 1e-6 * m.trace() / d;
    if eps.is_finite() && eps > 0.0 {
        eps
    } else {
        1e-6
    }
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Clips negative eigenvalues at zero.
pub fn psd_project(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(symmetrize(m));
    if eig.eigenvalues.iter().all(|&v| v >= 0.0) {
        return symmetrize(m);
    }
    let clipped = eig.eigenvalues.map(|v| v.max(0.0));
    symmetrize(&(&eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose()))
}

/// Cholesky factorization, retried once with a `ridge` added to the
/// diagonal when the matrix is not numerically positive definite.
pub fn cholesky_regularized(m: &DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Ok(c);
    }
    let eps = ridge(m);
    let n = m.nrows();
    let reg = m + DMatrix::identity(n, n) * eps;
    log::debug!("{what}: adding ridge {eps:e} before factorization");
    Cholesky::new(reg).ok_or_else(|| Error::Singular(what.to_string()))
}

/// Inverse of a symmetric positive definite matrix (with ridge fallback).
pub fn spd_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    Ok(symmetrize(&cholesky_regularized(m, what)?.inverse()))
}

/// Eigendecomposition sorted by decreasing eigenvalue.
pub fn sorted_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(symmetrize(m));
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let values = DVector::from_iterator(order.len(), order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(m.nrows(), order.len());
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

pub fn mean(rows: &[DVector<f64>]) -> Result<DVector<f64>> {
    let first = rows.first().ok_or_else(|| Error::Empty("no vectors".into()))?;
    let mut acc = DVector::zeros(first.len());
    for r in rows {
        if r.len() != first.len() {
            return Err(Error::DimensionMismatch {
                expected: first.len(),
                found: r.len(),
            });
        }
        acc += r;
    }
    Ok(acc / rows.len() as f64)
}

/// Population (1/n) scatter of `rows` about `center`.
pub fn covariance_about(rows: &[DVector<f64>], center: &DVector<f64>) -> DMatrix<f64> {
    let d = center.len();
    let mut acc = DMatrix::zeros(d, d);
    for r in rows {
        let c = r - center;
        acc.ger(1.0, &c, &c, 1.0);
    }
    symmetrize(&(acc / rows.len().max(1) as f64))
}

/// Groups vectors by label. Labels need not be contiguous.
pub fn group_by_label<'a>(
    rows: &'a [DVector<f64>],
    labels: &[usize],
) -> Result<Vec<Vec<&'a DVector<f64>>>> {
    if rows.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: rows.len(),
            found: labels.len(),
        });
    }
    let mut keys: Vec<usize> = labels.to_vec();
    keys.sort_unstable();
    keys.dedup();
    let mut groups = vec![Vec::new(); keys.len()];
    for (r, l) in rows.iter().zip(labels) {
        let g = keys.binary_search(l).expect("label collected above");
        groups[g].push(r);
    }
    Ok(groups)
}
