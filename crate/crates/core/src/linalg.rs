//! Small dense least-squares helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Builds a column-major design matrix from row-major `rows`, optionally
/// prepending a column of ones.
pub fn design(rows: &[Vec<f64>], intercept: bool) -> DMatrix<f64> {
    let n = rows.len();
    let p = rows.first().map_or(0, Vec::len) + usize::from(intercept);
    DMatrix::from_fn(n, p, |i, j| {
        if intercept {
            if j == 0 {
                1.0
            } else {
                rows[i][j - 1]
            }
        } else {
            rows[i][j]
        }
    })
}

/// Least squares via Householder QR. Fails with `SingularDesign` when the
/// design is rank deficient relative to its scale.
pub fn ols_qr(x: &DMatrix<f64>, y: &[f64]) -> Result<Vec<f64>> {
    let (n, p) = x.shape();
    if n < p || p == 0 {
        return Err(Error::SingularDesign);
    }
    let qr = x.clone().qr();
    let r = qr.r();
    let scale = (0..p).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if (0..p).any(|i| r[(i, i)].abs() <= 1e-12 * scale) || scale == 0.0 {
        return Err(Error::SingularDesign);
    }
    let qty = qr.q().transpose() * DVector::from_column_slice(y);
    let beta = r.solve_upper_triangular(&qty).ok_or(Error::SingularDesign)?;
    Ok(beta.iter().copied().collect())
}

/// Minimum-norm least squares via SVD; tolerates rank deficiency.
pub fn lstsq_svd(x: &DMatrix<f64>, y: &[f64]) -> Result<Vec<f64>> {
    let svd = x.clone().svd(true, true);
    let max_sv = svd.singular_values.max();
    let eps = 1e-12 * max_sv.max(f64::MIN_POSITIVE);
    let sol = svd
        .solve(&DVector::from_column_slice(y), eps)
        .map_err(|e| Error::SingularFit(e.to_string()))?;
    Ok(sol.iter().copied().collect())
}
