//! Seasonal-trend decomposition by loess.
//!
//! A direct rendering of the Cleveland et al. procedure without the
//! interpolation shortcut (every smoother is evaluated at every point).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StlConfig {
    /// Loess span for the cycle-subseries smoother, odd and >= 3.
    pub seasonal_window: usize,
    /// Loess span for the trend; `None` picks the smallest odd integer
    /// >= 1.5 period / (1 - 1.5 / seasonal_window).
    pub trend_window: Option<usize>,
    /// Loess span of the low-pass filter; `None` picks the smallest odd integer >= period.
    pub low_pass_window: Option<usize>,
    pub seasonal_degree: usize,
    pub trend_degree: usize,
    pub low_pass_degree: usize,
    pub inner_iterations: usize,
    /// Passes of the outer loop. Robustness weights are computed between
    /// passes, so the default of 1 gives the non-robust fit.
    pub outer_iterations: usize,
}

impl Default for StlConfig {
    fn default() -> Self {
        StlConfig {
            seasonal_window: 7,
            trend_window: None,
            low_pass_window: None,
            seasonal_degree: 1,
            trend_degree: 1,
            low_pass_degree: 1,
            inner_iterations: 2,
            outer_iterations: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StlResult {
    pub period: usize,
    pub trend: Vec<f64>,
    pub seasonal: Vec<f64>,
    pub residual: Vec<f64>,
}

fn next_odd(x: f64) -> usize {
    let n = x.ceil().max(1.0) as usize;
    if n % 2 == 0 {
        n + 1
    } else {
        n
    }
}

/// Additive decomposition `series = trend + seasonal + residual`.
pub fn stl_decompose(series: &[f64], period: usize, config: &StlConfig) -> Result<StlResult> {
    if period < 2 {
        return Err(Error::InvalidInput(format!("STL period must be >= 2, got {period}")));
    }
    let n = series.len();
    if n < 2 * period {
        return Err(Error::InsufficientData(format!(
            "STL with period {period} needs at least {} points, got {n}",
            2 * period
        )));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("STL input".into()));
    }
    if config.seasonal_window < 3 || config.seasonal_window % 2 == 0 {
        return Err(Error::InvalidInput("seasonal window must be odd and >= 3".into()));
    }
    for d in [config.seasonal_degree, config.trend_degree, config.low_pass_degree] {
        if d > 1 {
            return Err(Error::InvalidInput("loess degree must be 0 or 1".into()));
        }
    }
    let ns = config.seasonal_window;
    let nt = config.trend_window.unwrap_or_else(|| {
        next_odd(1.5 * period as f64 / (1.0 - 1.5 / ns as f64))
    });
    let nl = config.low_pass_window.unwrap_or_else(|| next_odd(period as f64));
    if nt < 3 || nl < 3 {
        return Err(Error::InvalidInput("trend and low-pass windows must be >= 3".into()));
    }

    let mut trend = vec![0.0; n];
    let mut seasonal = vec![0.0; n];
    let mut robustness = vec![1.0; n];
    let outer = config.outer_iterations.max(1);
    for pass in 0..outer {
        let use_weights = pass > 0;
        let weights = use_weights.then_some(robustness.as_slice());
        for _ in 0..config.inner_iterations.max(1) {
            let detrended: Vec<f64> = series.iter().zip(&trend).map(|(y, t)| y - t).collect();
            let cycle = cycle_subseries(&detrended, period, ns, config.seasonal_degree, weights);
            let low = low_pass(&cycle, period, nl, config.low_pass_degree);
            for i in 0..n {
                seasonal[i] = cycle[period + i] - low[i];
            }
            let deseasonal: Vec<f64> = series.iter().zip(&seasonal).map(|(y, s)| y - s).collect();
            trend = loess_smooth(&deseasonal, nt, config.trend_degree, weights);
        }
        if pass + 1 < outer {
            robustness = robustness_weights(series, &trend, &seasonal);
        }
    }
    let residual = (0..n).map(|i| series[i] - trend[i] - seasonal[i]).collect();
    Ok(StlResult { period, trend, seasonal, residual })
}

/// Smooths each cycle-subseries and extends it one step at both ends.
/// Output has length `n + 2 period`; index `period + i` aligns with input `i`.
fn cycle_subseries(
    x: &[f64],
    period: usize,
    window: usize,
    degree: usize,
    weights: Option<&[f64]>,
) -> Vec<f64> {
    let n = x.len();
    let mut out = vec![0.0; n + 2 * period];
    for j in 0..period {
        let idx: Vec<usize> = (j..n).step_by(period).collect();
        let k = idx.len();
        let sub: Vec<f64> = idx.iter().map(|&i| x[i]).collect();
        let sub_w: Option<Vec<f64>> = weights.map(|w| idx.iter().map(|&i| w[i]).collect());
        let smooth = loess_smooth(&sub, window, degree, sub_w.as_deref());
        let w = sub_w.as_deref();
        // Positions are 1-based within the subseries; 0 and k+1 are extrapolations.
        let first = loess_at(&sub, window, degree, 0.0, 1, window.min(k), w).unwrap_or(smooth[0]);
        let last = loess_at(&sub, window, degree, (k + 1) as f64, k.saturating_sub(window) + 1, k, w)
            .unwrap_or(smooth[k - 1]);
        out[j] = first;
        for (m, v) in smooth.into_iter().enumerate() {
            out[j + period * (m + 1)] = v;
        }
        out[j + period * (k + 1)] = last;
    }
    out
}

fn moving_average(x: &[f64], len: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len() + 1 - len);
    let mut sum: f64 = x[..len].iter().sum();
    out.push(sum / len as f64);
    for i in len..x.len() {
        sum += x[i] - x[i - len];
        out.push(sum / len as f64);
    }
    out
}

fn low_pass(cycle: &[f64], period: usize, window: usize, degree: usize) -> Vec<f64> {
    let a = moving_average(cycle, period);
    let b = moving_average(&a, period);
    let c = moving_average(&b, 3);
    loess_smooth(&c, window, degree, None)
}

/// Loess fit evaluated at every position `1..=n`.
fn loess_smooth(y: &[f64], window: usize, degree: usize, weights: Option<&[f64]>) -> Vec<f64> {
    let n = y.len();
    if n == 1 {
        return vec![y[0]];
    }
    let mut out = vec![0.0; n];
    if window >= n {
        for (i, o) in out.iter_mut().enumerate() {
            *o = loess_at(y, window, degree, (i + 1) as f64, 1, n, weights).unwrap_or(y[i]);
        }
        return out;
    }
    let half = (window + 1) / 2;
    let (mut left, mut right) = (1usize, window);
    for (i, o) in out.iter_mut().enumerate() {
        let pos = i + 1;
        if pos > half && right != n {
            left += 1;
            right += 1;
        }
        *o = loess_at(y, window, degree, pos as f64, left, right, weights).unwrap_or(y[i]);
    }
    out
}

/// Tricube-weighted local fit at position `xs` (1-based) over points `left..=right`.
/// Returns `None` when every weight vanishes.
fn loess_at(
    y: &[f64],
    window: usize,
    degree: usize,
    xs: f64,
    left: usize,
    right: usize,
    weights: Option<&[f64]>,
) -> Option<f64> {
    let n = y.len();
    let range = n as f64 - 1.0;
    let mut h = (xs - left as f64).max(right as f64 - xs);
    if window > n {
        h += ((window - n) / 2) as f64;
    }
    let h9 = 0.999 * h;
    let h1 = 0.001 * h;
    let mut w = vec![0.0; right - left + 1];
    let mut total = 0.0;
    for (slot, j) in (left..=right).enumerate() {
        let r = (j as f64 - xs).abs();
        if r <= h9 {
            let base = if r <= h1 { 1.0 } else { (1.0 - (r / h).powi(3)).powi(3) };
            let rw = weights.map_or(1.0, |rw| rw[j - 1]);
            w[slot] = base * rw;
            total += w[slot];
        }
    }
    if total <= 0.0 {
        return None;
    }
    for v in &mut w {
        *v /= total;
    }
    if degree >= 1 && h > 0.0 {
        let a: f64 = (left..=right).zip(&w).map(|(j, wj)| wj * j as f64).sum();
        let c: f64 = (left..=right).zip(&w).map(|(j, wj)| wj * (j as f64 - a).powi(2)).sum();
        if c.sqrt() > 0.001 * range {
            let b = (xs - a) / c;
            for (j, wj) in (left..=right).zip(w.iter_mut()) {
                *wj *= b * (j as f64 - a) + 1.0;
            }
        }
    }
    Some((left..=right).zip(&w).map(|(j, wj)| wj * y[j - 1]).sum())
}

fn robustness_weights(y: &[f64], trend: &[f64], seasonal: &[f64]) -> Vec<f64> {
    let resid: Vec<f64> = (0..y.len()).map(|i| (y[i] - trend[i] - seasonal[i]).abs()).collect();
    let mut sorted = resid.clone();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 0 { 0.5 * (sorted[mid - 1] + sorted[mid]) } else { sorted[mid] };
    let h = 6.0 * median;
    resid
        .iter()
        .map(|r| {
            if h <= 0.0 {
                1.0
            } else {
                let u = r / h;
                if u <= 0.001 {
                    1.0
                } else if u <= 0.999 {
                    (1.0 - u * u).powi(2)
                } else {
                    0.0
                }
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn correlation(a: &[f64], b: &[f64]) -> f64 {
        let ma = a.iter().sum::<f64>() / a.len() as f64;
        let mb = b.iter().sum::<f64>() / b.len() as f64;
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn default_windows() {
        // 1.5 * 7 / (1 - 1.5/7) = 13.36 -> 15
        assert_eq!(next_odd(1.5 * 7.0 / (1.0 - 1.5 / 7.0)), 15);
        assert_eq!(next_odd(7.0), 7);
        assert_eq!(next_odd(12.0), 13);
    }

    #[test]
    fn ramp_has_no_seasonality() {
        let slope = 0.37;
        let y: Vec<f64> = (0..140).map(|i| 5.0 + slope * i as f64).collect();
        let r = stl_decompose(&y, 7, &StlConfig::default()).unwrap();
        let max_seasonal = r.seasonal.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max_seasonal < 1e-6 * slope, "seasonal leak {max_seasonal}");
        for (t, v) in r.trend.iter().zip(&y) {
            assert!((t - v).abs() < 1e-8);
        }
    }

    #[test]
    fn planted_weekly_pattern_recovered() {
        let pattern = [2.0, 3.0, 2.5, 2.0, 1.0, -5.0, -5.5];
        let planted: Vec<f64> = (0..210).map(|i| pattern[i % 7]).collect();
        let y: Vec<f64> = (0..210).map(|i| 10.0 + 0.05 * i as f64 + planted[i]).collect();
        let r = stl_decompose(&y, 7, &StlConfig::default()).unwrap();
        assert!(correlation(&r.seasonal, &planted) >= 0.99);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(stl_decompose(&[1.0; 20], 1, &StlConfig::default()).is_err());
        assert!(stl_decompose(&[1.0; 13], 7, &StlConfig::default()).is_err());
    }

    #[test]
    fn robust_passes_run() {
        let mut y: Vec<f64> = (0..100).map(|i| (i as f64 * 0.9).sin() + 0.01 * i as f64).collect();
        y[40] += 50.0;
        let cfg = StlConfig { outer_iterations: 3, ..StlConfig::default() };
        let r = stl_decompose(&y, 7, &cfg).unwrap();
        assert!(r.residual[40] > 30.0);
    }

    proptest! {
        #[test]
        fn reconstruction_identity(
            y in proptest::collection::vec(-100.0f64..100.0, 14..200),
            period in 2usize..8,
        ) {
            prop_assume!(y.len() >= 2 * period);
            let r = stl_decompose(&y, period, &StlConfig::default()).unwrap();
            for i in 0..y.len() {
                prop_assert!((r.trend[i] + r.seasonal[i] + r.residual[i] - y[i]).abs() <= 1e-9);
            }
        }
    }
}
