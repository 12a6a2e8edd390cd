//! Least squares with heteroskedasticity-robust (HC3) standard errors.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct OlsFit {
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub residuals: Vec<f64>,
    pub df_resid: usize,
}

/// Build an n×k matrix from k columns.
pub(crate) fn design_from_columns(columns: &[&[f64]]) -> DMatrix<f64> {
    let n = columns.first().map_or(0, |c| c.len());
    DMatrix::from_fn(n, columns.len(), |i, j| columns[j][i])
}

/// Inverse of a symmetric positive definite matrix, failing when it is
/// numerically singular after unit-diagonal rescaling.
pub(crate) fn spd_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let k = m.nrows();
    let scale: Vec<f64> = (0..k).map(|j| m[(j, j)].max(0.0).sqrt()).collect();
    if scale.iter().any(|&s| s == 0.0 || !s.is_finite()) {
        return Err(Error::RankDeficient(format!("{what}: zero column")));
    }
    let normalized = DMatrix::from_fn(k, k, |i, j| m[(i, j)] / (scale[i] * scale[j]));
    let eig = normalized.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().cloned().fold(f64::MIN, f64::max);
    let min = eig.eigenvalues.iter().cloned().fold(f64::MAX, f64::min);
    if !(min > 1e-10 * max.max(1.0)) {
        return Err(Error::RankDeficient(format!(
            "{what}: collinear columns (eigenvalue ratio {:.3e})",
            min / max
        )));
    }
    let inv = normalized
        .cholesky()
        .ok_or_else(|| Error::RankDeficient(format!("{what}: not positive definite")))?
        .inverse();
    Ok(DMatrix::from_fn(k, k, |i, j| inv[(i, j)] / (scale[i] * scale[j])))
}

/// Ordinary least squares of `response` on the given regressor columns
/// (no implicit intercept) with HC3 sandwich standard errors.
pub fn ols_hc3(columns: &[&[f64]], response: &[f64]) -> Result<OlsFit> {
    let n = response.len();
    let k = columns.len();
    if k == 0 {
        return Err(Error::InvalidArgument("no regressors".into()));
    }
    if columns.iter().any(|c| c.len() != n) {
        return Err(Error::InvalidArgument("regressor length mismatch".into()));
    }
    if n <= k {
        return Err(Error::RankDeficient(format!("{n} rows for {k} regressors")));
    }
    let x = design_from_columns(columns);
    let y = DVector::from_column_slice(response);
    let xtx = x.transpose() * &x;
    let xtx_inv = spd_inverse(&xtx, "least squares")?;
    let beta = &xtx_inv * (x.transpose() * &y);
    let fitted = &x * &beta;
    let residuals: Vec<f64> = (0..n).map(|i| y[i] - fitted[i]).collect();

    let mut meat = DMatrix::<f64>::zeros(k, k);
    for i in 0..n {
        let row = x.row(i).transpose();
        let h = (row.transpose() * &xtx_inv * &row)[(0, 0)];
        let e = residuals[i];
        if e == 0.0 {
            continue;
        }
        let denom = 1.0 - h;
        let w = if denom > 1e-10 { e * e / (denom * denom) } else { e * e };
        meat += &row * row.transpose() * w;
    }
    let cov = &xtx_inv * meat * &xtx_inv;
    let std_errors = (0..k).map(|j| cov[(j, j)].max(0.0).sqrt()).collect();
    Ok(OlsFit {
        coefficients: beta.iter().copied().collect(),
        std_errors,
        residuals,
        df_resid: n - k,
    })
}
