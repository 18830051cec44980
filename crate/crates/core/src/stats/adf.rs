use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::TestResult;
use crate::error::{Error, Result};
use crate::linalg::ols;

/// MacKinnon (2010) response-surface critical values for the constant-only
/// ADF regression, evaluated at a given sample size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdfCriticalValues {
    pub one_pct: f64,
    pub five_pct: f64,
    pub ten_pct: f64,
}

pub fn adf_critical_values(nobs: usize) -> AdfCriticalValues {
    let t = nobs as f64;
    let surface = |b: [f64; 4]| b[0] + b[1] / t + b[2] / (t * t) + b[3] / (t * t * t);
    AdfCriticalValues {
        one_pct: surface([-3.43035, -6.5393, -16.786, -79.433]),
        five_pct: surface([-2.86154, -2.8903, -4.234, -40.040]),
        ten_pct: surface([-2.56677, -1.5384, -2.809, 0.0]),
    }
}

/// Schwert's rule of thumb `floor(12 (n/100)^(1/4))`.
pub fn schwert_max_lag(n: usize) -> usize {
    (12.0 * (n as f64 / 100.0).powf(0.25)).floor() as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdfResult {
    /// `statistic` is the t-ratio on the lagged level; `critical_value` is the 5% value.
    pub result: TestResult,
    pub lags: usize,
    pub nobs: usize,
    pub critical_values: AdfCriticalValues,
}

/// Augmented Dickey-Fuller test with a constant and no trend:
///
/// `dy_t = a + g y_{t-1} + sum_{i=1..k} d_i dy_{t-i} + e_t`
///
/// The unit root is rejected when the t-ratio of `g` falls below the 5%
/// critical value. `max_lag = None` uses [`schwert_max_lag`]; the lag order is
/// fixed at that value, not searched.
pub fn adf_test(series: &[f64], max_lag: Option<usize>) -> Result<AdfResult> {
    let n = series.len();
    let k = max_lag.unwrap_or_else(|| schwert_max_lag(n));
    if n < 20 + k {
        return Err(Error::InsufficientData(format!(
            "ADF with {k} lags needs at least {} observations, got {n}",
            20 + k
        )));
    }
    let first = series[0];
    if series.iter().all(|&x| x == first) {
        return Err(Error::ZeroVariance("series".into()));
    }
    let dy: Vec<f64> = series.windows(2).map(|w| w[1] - w[0]).collect();
    let rows: Vec<usize> = (k..dy.len()).collect();
    let nobs = rows.len();
    let x = DMatrix::from_fn(nobs, 2 + k, |r, c| {
        let i = rows[r];
        match c {
            0 => 1.0,
            1 => series[i],
            _ => dy[i - (c - 1)],
        }
    });
    let y: Vec<f64> = rows.iter().map(|&i| dy[i]).collect();
    let fit = ols(&x, &y)?;
    let se = fit.std_errors[1];
    if se <= 0.0 || !se.is_finite() {
        return Err(Error::ZeroVariance("ADF regression residuals".into()));
    }
    let statistic = fit.coefficients[1] / se;
    let critical_values = adf_critical_values(nobs);
    Ok(AdfResult {
        result: TestResult {
            statistic,
            p_value: None,
            critical_value: Some(critical_values.five_pct),
            reject_at_5pct: statistic < critical_values.five_pct,
        },
        lags: k,
        nobs,
        critical_values,
    })
}
