use crate::error::{Error, Result};

fn centered(series: &[f64], max_lag: usize) -> Result<(Vec<f64>, f64)> {
    if series.len() <= max_lag {
        return Err(Error::InsufficientData(format!(
            "series of length {} cannot give lags up to {max_lag}",
            series.len()
        )));
    }
    let mean = series.iter().sum::<f64>() / series.len() as f64;
    let c: Vec<f64> = series.iter().map(|x| x - mean).collect();
    let c0: f64 = c.iter().map(|x| x * x).sum();
    if c0 <= f64::EPSILON * series.len() as f64 * mean.abs().max(1.0).powi(2) {
        return Err(Error::ZeroVariance("series".into()));
    }
    Ok((c, c0))
}

/// Sample autocorrelation at lags `0..=max_lag` (`acf[0] == 1`).
pub fn acf(series: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let (c, c0) = centered(series, max_lag)?;
    Ok((0..=max_lag)
        .map(|k| {
            if k == 0 {
                1.0
            } else {
                c.iter().zip(&c[k..]).map(|(a, b)| a * b).sum::<f64>() / c0
            }
        })
        .collect())
}

/// Partial autocorrelation at lags `0..=max_lag` via Durbin-Levinson.
/// `pacf[0]` is 1 by convention.
pub fn pacf(series: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let r = acf(series, max_lag)?;
    let mut out = vec![1.0];
    // phi[k-1][j]: coefficients of the order-k fit.
    let mut prev: Vec<f64> = Vec::new();
    let mut v = 1.0;
    for k in 1..=max_lag {
        let num = r[k] - prev.iter().enumerate().map(|(j, p)| p * r[k - 1 - j]).sum::<f64>();
        let kappa = if v > 0.0 { num / v } else { 0.0 };
        let mut next = Vec::with_capacity(k);
        for j in 0..k - 1 {
            next.push(prev[j] - kappa * prev[k - 2 - j]);
        }
        next.push(kappa);
        v *= 1.0 - kappa * kappa;
        prev = next;
        out.push(kappa);
    }
    Ok(out)
}

/// Half-width of the approximate 95% white-noise band, `1.96 / sqrt(n)`.
pub fn white_noise_band(n: usize) -> f64 {
    1.96 / (n as f64).sqrt()
}
