//! Small dense least-squares helpers shared by the estimators.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Ordinary least-squares fit of `y` on the columns of `x`.
#[derive(Debug, Clone)]
pub struct OlsFit {
    pub coefficients: Vec<f64>,
    pub residuals: Vec<f64>,
    pub sse: f64,
    /// Standard errors from `sigma^2 (X'X)^-1` with `sigma^2 = SSE / (n - k)`.
    pub std_errors: Vec<f64>,
}

/// Solves `min ||y - X b||^2` through the normal equations.
pub fn ols(x: &DMatrix<f64>, y: &[f64]) -> Result<OlsFit> {
    let (n, k) = x.shape();
    if n != y.len() {
        return Err(Error::Shape(format!("design has {n} rows, target has {}", y.len())));
    }
    if n <= k {
        return Err(Error::InsufficientData(format!(
            "least squares needs more rows ({n}) than columns ({k})"
        )));
    }
    let yv = DVector::from_column_slice(y);
    let xtx = x.transpose() * x;
    let xty = x.transpose() * &yv;
    let inv = xtx
        .try_inverse()
        .ok_or_else(|| Error::Singular("X'X is not invertible".into()))?;
    let beta = &inv * xty;
    let fitted = x * &beta;
    let residuals: Vec<f64> = yv.iter().zip(fitted.iter()).map(|(a, b)| a - b).collect();
    let sse: f64 = residuals.iter().map(|r| r * r).sum();
    let sigma2 = sse / (n - k) as f64;
    let std_errors = (0..k).map(|j| (sigma2 * inv[(j, j)]).max(0.0).sqrt()).collect();
    Ok(OlsFit {
        coefficients: beta.iter().copied().collect(),
        residuals,
        sse,
        std_errors,
    })
}

/// Solves the symmetric positive-definite system `A x = b` by Cholesky.
pub fn solve_spd(a: DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let chol = a
        .cholesky()
        .ok_or_else(|| Error::Singular("matrix is not positive definite".into()))?;
    Ok(chol.solve(b))
}

/// Linear-interpolation quantile of an already sorted slice (`0 <= p <= 1`).
pub(crate) fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population variance (divisor N).
pub(crate) fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64
}
