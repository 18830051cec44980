//! Univariate ARIMA: differencing, CSS estimation, stepwise order search,
//! forecasting and residual diagnostics.
//!
//! The model on the `d`-times differenced series `w` is
//!
//! `w_t = mu + sum_i phi_i w_{t-i} + e_t - sum_j theta_j e_{t-j}`.

mod css;
mod search;

use serde::{Deserialize, Serialize};

use crate::data::DateRange;
use crate::error::{Error, Result};
use crate::stats::{acf, pacf, white_noise_band, TestResult};

use css::{hannan_rissanen, innovations, minimize_css, Layout};
pub use search::{auto_arima, common_sample_aic, stepwise_search, Candidate, SearchConfig, SearchOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ArimaOrder {
    pub p: usize,
    pub d: usize,
    pub q: usize,
}

impl ArimaOrder {
    pub fn new(p: usize, d: usize, q: usize) -> Self {
        ArimaOrder { p, d, q }
    }
}

impl std::fmt::Display for ArimaOrder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ARIMA({},{},{})", self.p, self.d, self.q)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArimaModel {
    pub order: ArimaOrder,
    pub mu: f64,
    pub phi: Vec<f64>,
    pub theta: Vec<f64>,
    pub sigma2: f64,
    pub aic: f64,
    pub sse: f64,
    pub n_eff: usize,
    pub iterations: usize,
    /// Innovations from the first full-lag point of the differenced training series,
    /// `len = n_train - d - max(p, q)`.
    pub residuals: Vec<f64>,
    #[serde(default)]
    pub training_range: Option<DateRange>,
}

impl ArimaModel {
    fn layout(&self) -> Layout {
        Layout { p: self.order.p, q: self.order.q }
    }

    fn params(&self) -> Vec<f64> {
        let mut v = vec![self.mu];
        v.extend(&self.phi);
        v.extend(&self.theta);
        v
    }

    /// History length needed before the first one-step forecast.
    pub fn min_history(&self) -> usize {
        self.order.d + self.order.p.max(self.order.q)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Applies the first difference `d` times.
pub fn difference(series: &[f64], d: usize) -> Result<Vec<f64>> {
    if series.len() < d + 1 {
        return Err(Error::InsufficientData(format!(
            "differencing {d} times needs at least {} points, got {}",
            d + 1,
            series.len()
        )));
    }
    let mut out = series.to_vec();
    for _ in 0..d {
        out = out.windows(2).map(|w| w[1] - w[0]).collect();
    }
    Ok(out)
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `y_t - Delta^d y_t`, which depends only on the `d` values before `t`.
/// `before` lists them most-recent first.
fn undifference_offset(before: &[f64], d: usize) -> f64 {
    (1..=d).map(|k| -binomial(d, k) * (-1f64).powi(k as i32) * before[k - 1]).sum()
}

/// Inverse of [`difference`]: `anchors` are the first `d` values of the original series.
pub fn integrate(diffed: &[f64], d: usize, anchors: &[f64]) -> Result<Vec<f64>> {
    if anchors.len() != d {
        return Err(Error::InvalidInput(format!(
            "integrating {d} times needs {d} anchors, got {}",
            anchors.len()
        )));
    }
    let mut out = anchors.to_vec();
    out.reserve(diffed.len());
    for w in diffed {
        let t = out.len();
        let before: Vec<f64> = (1..=d).map(|k| out[t - k]).collect();
        out.push(w + undifference_offset(&before, d));
    }
    Ok(out)
}

/// Gaussian AIC `n_eff ln(sse / n_eff) + 2k`.
pub fn aic(sse: f64, n_eff: usize, k: usize) -> Result<f64> {
    if !(sse > 0.0 && sse.is_finite()) {
        return Err(Error::InvalidInput(format!("AIC needs a positive finite SSE, got {sse}")));
    }
    if n_eff <= k {
        return Err(Error::InvalidInput(format!("AIC needs n_eff ({n_eff}) > k ({k})")));
    }
    let n = n_eff as f64;
    Ok(n * (sse / n).ln() + 2.0 * k as f64)
}

/// CSS fit of ARMA(p, q) with a constant to an already stationary series.
pub fn fit_arma(series: &[f64], p: usize, q: usize) -> Result<ArimaModel> {
    let need = 10 * (p + q + 1);
    if series.len() < need {
        return Err(Error::InsufficientData(format!(
            "ARMA({p},{q}) needs at least {need} points, got {}",
            series.len()
        )));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("ARMA input".into()));
    }
    let first = series[0];
    if series.iter().all(|&v| v == first) {
        return Err(Error::ZeroVariance("series".into()));
    }
    let layout = Layout { p, q };
    let fit = minimize_css(series, layout, hannan_rissanen(series, layout))?;
    let (e, _) = innovations(series, layout, &fit.params);
    let residuals = e[layout.start()..].to_vec();
    let (mu, phi, theta) = layout.split(&fit.params);
    Ok(ArimaModel {
        order: ArimaOrder::new(p, 0, q),
        mu,
        phi: phi.to_vec(),
        theta: theta.to_vec(),
        sigma2: fit.sse / fit.n_eff as f64,
        aic: aic(fit.sse, fit.n_eff, p + q + 2)?,
        sse: fit.sse,
        n_eff: fit.n_eff,
        iterations: fit.iterations,
        residuals,
        training_range: None,
    })
}

/// Differences `d` times, then fits ARMA(p, q).
pub fn fit_arima(series: &[f64], order: ArimaOrder) -> Result<ArimaModel> {
    let w = difference(series, order.d)?;
    let mut model = fit_arma(&w, order.p, order.q)?;
    model.order.d = order.d;
    Ok(model)
}

/// One-step predictions in level space for every index `t >= min_history`
/// of `y`, plus the prediction for the index just past the end.
fn level_predictions(model: &ArimaModel, y: &[f64]) -> Result<Vec<f64>> {
    let d = model.order.d;
    if y.len() < model.min_history() {
        return Err(Error::InsufficientData(format!(
            "{} needs {} history points, got {}",
            model.order,
            model.min_history(),
            y.len()
        )));
    }
    let mut w = difference(y, d).unwrap_or_default();
    // Placeholder for the unobserved next value; its own innovation is never used.
    w.push(0.0);
    let layout = model.layout();
    let (_, pred) = innovations(&w, layout, &model.params());
    let m = layout.start();
    let mut out = Vec::with_capacity(w.len() - m);
    for (i, wp) in pred.iter().enumerate().skip(m) {
        let t = i + d;
        let before: Vec<f64> = (1..=d).map(|k| y[t - k]).collect();
        out.push(wp + undifference_offset(&before, d));
    }
    Ok(out)
}

/// Forecast of the value following `history`.
pub fn forecast_one_step(model: &ArimaModel, history: &[f64]) -> Result<f64> {
    Ok(*level_predictions(model, history)?.last().expect("at least one prediction"))
}

/// One-step-ahead forecasts over `test`, feeding observed actuals back
/// into the history. Parameters stay fixed.
pub fn rolling_forecast(model: &ArimaModel, train: &[f64], test: &[f64]) -> Result<Vec<f64>> {
    if test.is_empty() {
        return Ok(Vec::new());
    }
    let mut all = train.to_vec();
    all.extend_from_slice(&test[..test.len() - 1]);
    if train.len() < model.min_history() {
        return Err(Error::InsufficientData(format!(
            "training history of {} is shorter than the {} lags {} needs",
            train.len(),
            model.min_history(),
            model.order
        )));
    }
    let preds = level_predictions(model, &all)?;
    Ok(preds[preds.len() - test.len()..].to_vec())
}

/// Rolling forecasts with the order held fixed and parameters re-estimated on
/// the expanding window every `refit_every` test days (`0` never refits).
pub fn rolling_forecast_refit(
    model: &ArimaModel,
    train: &[f64],
    test: &[f64],
    refit_every: usize,
) -> Result<Vec<f64>> {
    if refit_every == 0 {
        return rolling_forecast(model, train, test);
    }
    let mut out = Vec::with_capacity(test.len());
    let mut current = model.clone();
    for (chunk_idx, chunk) in test.chunks(refit_every).enumerate() {
        let seen = chunk_idx * refit_every;
        let mut history = train.to_vec();
        history.extend_from_slice(&test[..seen]);
        if chunk_idx > 0 {
            current = fit_arima(&history, model.order)?;
        }
        out.extend(rolling_forecast(&current, &history, chunk)?);
    }
    Ok(out)
}

/// Multi-step forecast from the end of `history`; future innovations are zero.
pub fn forecast(model: &ArimaModel, history: &[f64], horizon: usize) -> Result<Vec<f64>> {
    let mut y = history.to_vec();
    let mut out = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let next = forecast_one_step(model, &y)?;
        out.push(next);
        y.push(next);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualDiagnostics {
    pub residuals: Vec<f64>,
    /// Lags `0..=max_lag`.
    pub acf: Vec<f64>,
    pub pacf: Vec<f64>,
    /// Half-width of the 95% white-noise band.
    pub band: f64,
    pub mean: f64,
    pub std: f64,
    /// Jarque-Bera normality test.
    pub normality: TestResult,
}

impl ResidualDiagnostics {
    /// Lags (from 1) whose autocorrelation lies outside the white-noise band.
    pub fn acf_exceedances(&self) -> Vec<usize> {
        (1..self.acf.len()).filter(|&k| self.acf[k].abs() > self.band).collect()
    }
}

pub const DIAGNOSTIC_LAGS: usize = 28;

pub fn residual_diagnostics(model: &ArimaModel) -> Result<ResidualDiagnostics> {
    let r = &model.residuals;
    let n = r.len();
    let max_lag = DIAGNOSTIC_LAGS.min(n.saturating_sub(1));
    let mean = r.iter().sum::<f64>() / n as f64;
    let m2 = r.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    let m3 = r.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / n as f64;
    let m4 = r.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n as f64;
    let skew = m3 / m2.powf(1.5);
    let kurt = m4 / (m2 * m2);
    let jb = n as f64 / 6.0 * (skew * skew + (kurt - 3.0).powi(2) / 4.0);
    // Chi-square with 2 df has survival function exp(-x/2).
    let normality = TestResult::from_p_value(jb, (-jb / 2.0).exp());
    Ok(ResidualDiagnostics {
        residuals: r.clone(),
        acf: acf(r, max_lag)?,
        pacf: pacf(r, max_lag)?,
        band: white_noise_band(n),
        mean,
        std: m2.sqrt(),
        normality,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn difference_hand_case() {
        assert_eq!(difference(&[1.0, 3.0, 6.0], 1).unwrap(), vec![2.0, 3.0]);
        assert_eq!(difference(&[1.0, 3.0, 6.0], 0).unwrap(), vec![1.0, 3.0, 6.0]);
        assert_eq!(difference(&[1.0, 3.0, 6.0], 2).unwrap(), vec![1.0]);
        assert!(difference(&[1.0, 2.0], 2).is_err());
    }

    #[test]
    fn integrate_roundtrip() {
        let x = [3.0, -1.0, 4.0, 1.5, 9.0, 2.6, 5.0];
        for d in 0..=2 {
            let w = difference(&x, d).unwrap();
            let back = integrate(&w, d, &x[..d]).unwrap();
            for (a, b) in back.iter().zip(&x) {
                assert!((a - b).abs() < 1e-10);
            }
        }
        assert!(integrate(&[1.0], 2, &[0.0]).is_err());
    }

    #[test]
    fn aic_values() {
        assert_eq!(aic(100.0, 100, 3).unwrap(), 6.0);
        assert!((aic(50.0, 100, 3).unwrap() - (100.0 * 0.5f64.ln() + 6.0)).abs() < 1e-12);
        assert!((aic(50.0, 100, 3).unwrap() + 63.3147).abs() < 1e-4);
        assert!((aic(50.0, 100, 6).unwrap() - aic(50.0, 100, 3).unwrap() - 6.0).abs() < 1e-12);
        assert!(aic(0.0, 100, 3).is_err());
        assert!(aic(1.0, 3, 3).is_err());
    }

    fn manual(order: ArimaOrder, mu: f64, phi: Vec<f64>, theta: Vec<f64>) -> ArimaModel {
        ArimaModel {
            order,
            mu,
            phi,
            theta,
            sigma2: 1.0,
            aic: 0.0,
            sse: 1.0,
            n_eff: 1,
            iterations: 0,
            residuals: vec![],
            training_range: None,
        }
    }

    #[test]
    fn ar1_hand_forecast() {
        let m = manual(ArimaOrder::new(1, 0, 0), 0.0, vec![0.5], vec![]);
        assert_eq!(forecast_one_step(&m, &[3.0, 10.0]).unwrap(), 5.0);
    }

    #[test]
    fn ma1_memory_is_one_step() {
        let m = manual(ArimaOrder::new(0, 0, 1), 4.0, vec![], vec![0.6]);
        let f = forecast(&m, &[1.0, 7.0, 2.0, 9.0], 4).unwrap();
        assert!((f[0] - 4.0).abs() > 1e-6);
        for v in &f[1..] {
            assert!((v - 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn random_walk_with_drift_forecast() {
        let m = manual(ArimaOrder::new(0, 1, 0), 0.5, vec![], vec![]);
        assert_eq!(forecast(&m, &[1.0, 2.0], 2).unwrap(), vec![2.5, 3.0]);
    }

    #[test]
    fn rolling_shape_and_history_check() {
        let m = manual(ArimaOrder::new(2, 1, 0), 0.0, vec![0.2, 0.1], vec![]);
        let train: Vec<f64> = (0..10).map(f64::from).collect();
        let test = [10.0, 11.0, 12.0];
        let f = rolling_forecast(&m, &train, &test).unwrap();
        assert_eq!(f.len(), 3);
        // One-step values equal forecasting from each growing prefix.
        let mut hist = train.clone();
        for (i, v) in test.iter().enumerate() {
            assert!((f[i] - forecast_one_step(&m, &hist).unwrap()).abs() < 1e-12);
            hist.push(*v);
        }
        assert!(rolling_forecast(&m, &train[..2], &test).is_err());
    }

    #[test]
    fn json_roundtrip() {
        let m = manual(ArimaOrder::new(1, 1, 1), 0.1, vec![0.3], vec![0.2]);
        let back = ArimaModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
    }
}
