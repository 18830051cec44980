//! Lasso regression by cyclic coordinate descent, with a lambda path,
//! blocked cross-validation and percentile-bootstrap bands.
//!
//! Objective: `(1/2N) ||y - b0 - X beta||^2 + lambda ||beta||_1`, intercept unpenalized.

use std::io::Write;

use chrono::NaiveDate;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::FeatureMatrix;
use crate::error::{Error, Result};
use crate::linalg::quantile_sorted;

pub const TOLERANCE: f64 = 1e-7;
pub const MAX_SWEEPS: usize = 10_000;

/// `sign(z) max(|z| - gamma, 0)`.
pub fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoModel {
    pub feature_names: Vec<String>,
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub lambda: f64,
    /// Names of features with `|weight| > 1e-12`.
    pub selected: Vec<String>,
    pub sweeps: usize,
    pub converged: bool,
    /// Objective after each sweep.
    #[serde(skip)]
    pub objective_trace: Vec<f64>,
}

impl LassoModel {
    pub fn support_size(&self) -> usize {
        self.selected.len()
    }
}

fn check_inputs(x: &DMatrix<f64>, y: &[f64], lambda: f64) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::Shape(format!("{} rows but {} targets", x.nrows(), y.len())));
    }
    if x.nrows() == 0 {
        return Err(Error::InsufficientData("lasso needs at least one row".into()));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidInput(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("lasso inputs".into()));
    }
    Ok(())
}

fn column_means(x: &DMatrix<f64>) -> Vec<f64> {
    let n = x.nrows() as f64;
    x.column_iter().map(|c| c.sum() / n).collect()
}

/// Objective value at `(intercept, beta)`.
pub fn objective(x: &DMatrix<f64>, y: &[f64], intercept: f64, beta: &[f64], lambda: f64) -> f64 {
    let n = y.len() as f64;
    let fitted = x * nalgebra::DVector::from_column_slice(beta);
    let sse: f64 = y.iter().zip(fitted.iter()).map(|(a, f)| (a - intercept - f).powi(2)).sum();
    sse / (2.0 * n) + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
}

fn coordinate_descent(
    names: &[String],
    x: &DMatrix<f64>,
    y: &[f64],
    lambda: f64,
    warm: Option<&[f64]>,
) -> LassoModel {
    let (n, k) = x.shape();
    let nf = n as f64;
    let means = column_means(x);
    let ybar = y.iter().sum::<f64>() / nf;
    let mut xc = x.clone();
    for (j, mut col) in xc.column_iter_mut().enumerate() {
        col.add_scalar_mut(-means[j]);
    }
    let v: Vec<f64> = xc.column_iter().map(|c| c.norm_squared() / nf).collect();
    let mut beta = warm.map_or_else(|| vec![0.0; k], <[f64]>::to_vec);
    let mut resid: Vec<f64> = y.iter().map(|a| a - ybar).collect();
    for j in 0..k {
        if beta[j] != 0.0 {
            for (r, xv) in resid.iter_mut().zip(xc.column(j).iter()) {
                *r -= beta[j] * xv;
            }
        }
    }
    let penalty = |b: &[f64]| lambda * b.iter().map(|v| v.abs()).sum::<f64>();
    let obj = |r: &[f64], b: &[f64]| r.iter().map(|e| e * e).sum::<f64>() / (2.0 * nf) + penalty(b);
    let mut trace = Vec::new();
    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < MAX_SWEEPS {
        sweeps += 1;
        let mut max_change = 0.0f64;
        for j in 0..k {
            if v[j] <= 0.0 {
                beta[j] = 0.0;
                continue;
            }
            let col = xc.column(j);
            let dot: f64 = col.iter().zip(&resid).map(|(a, b)| a * b).sum();
            let z = dot / nf + v[j] * beta[j];
            let new = soft_threshold(z, lambda) / v[j];
            let delta = new - beta[j];
            if delta != 0.0 {
                for (r, xv) in resid.iter_mut().zip(col.iter()) {
                    *r -= delta * xv;
                }
                beta[j] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        trace.push(obj(&resid, &beta));
        if max_change < TOLERANCE {
            converged = true;
            break;
        }
    }
    let intercept = ybar - means.iter().zip(&beta).map(|(m, b)| m * b).sum::<f64>();
    let selected = names
        .iter()
        .zip(&beta)
        .filter(|(_, b)| b.abs() > 1e-12)
        .map(|(s, _)| s.clone())
        .collect();
    LassoModel {
        feature_names: names.to_vec(),
        weights: beta,
        intercept,
        lambda,
        selected,
        sweeps,
        converged,
        objective_trace: trace,
    }
}

fn default_names(k: usize) -> Vec<String> {
    (0..k).map(|j| format!("x{j}")).collect()
}

/// Fit on a raw design; `names` default to `x0, x1, ..`.
pub fn fit_lasso_matrix(
    x: &DMatrix<f64>,
    y: &[f64],
    lambda: f64,
    names: Option<&[String]>,
) -> Result<LassoModel> {
    check_inputs(x, y, lambda)?;
    let names = names.map_or_else(|| default_names(x.ncols()), <[String]>::to_vec);
    if names.len() != x.ncols() {
        return Err(Error::Shape(format!("{} names for {} columns", names.len(), x.ncols())));
    }
    Ok(coordinate_descent(&names, x, y, lambda, None))
}

/// Fit on a standardized feature matrix.
pub fn fit_lasso(features: &FeatureMatrix, lambda: f64) -> Result<LassoModel> {
    if !features.is_standardized() {
        return Err(Error::InvalidInput("lasso expects standardized features".into()));
    }
    fit_lasso_matrix(&features.values, &features.target, lambda, Some(&features.columns))
}

/// Smallest lambda at which every weight is zero: `max_j |X_j'(y - ybar)| / N`
/// over mean-centered columns.
pub fn lambda_max(x: &DMatrix<f64>, y: &[f64]) -> f64 {
    let n = y.len() as f64;
    let ybar = y.iter().sum::<f64>() / n;
    let means = column_means(x);
    x.column_iter()
        .enumerate()
        .map(|(j, c)| {
            c.iter().zip(y).map(|(a, b)| (a - means[j]) * (b - ybar)).sum::<f64>().abs() / n
        })
        .fold(0.0, f64::max)
}

/// Log-spaced grid from `lambda_max` down to `lambda_max * 1e-3`.
pub fn lambda_path(x: &DMatrix<f64>, y: &[f64], n_lambdas: usize) -> Result<Vec<f64>> {
    if n_lambdas < 2 {
        return Err(Error::InvalidInput("lambda path needs at least 2 points".into()));
    }
    let top = lambda_max(x, y);
    let steps = (n_lambdas - 1) as f64;
    Ok((0..n_lambdas)
        .map(|i| {
            if i == 0 {
                top
            } else if i == n_lambdas - 1 {
                top * 1e-3
            } else {
                top * 10f64.powf(-3.0 * i as f64 / steps)
            }
        })
        .collect())
}

/// Warm-started fits along a descending grid.
pub fn fit_path(x: &DMatrix<f64>, y: &[f64], grid: &[f64]) -> Result<Vec<LassoModel>> {
    let names = default_names(x.ncols());
    let mut out: Vec<LassoModel> = Vec::with_capacity(grid.len());
    for &lambda in grid {
        check_inputs(x, y, lambda)?;
        let warm = out.last().map(|m| m.weights.clone());
        out.push(coordinate_descent(&names, x, y, lambda, warm.as_deref()));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FoldScheme {
    /// Contiguous blocks of time-ordered rows.
    #[default]
    Contiguous,
    /// Rows permuted with the seed, then cut into blocks.
    Shuffled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub lambda_star: f64,
    pub grid: Vec<f64>,
    /// Mean validation MSE per grid point.
    pub mean_errors: Vec<f64>,
}

fn fold_assignment(n: usize, k: usize, scheme: FoldScheme, seed: u64) -> Result<Vec<Vec<usize>>> {
    let mut order: Vec<usize> = (0..n).collect();
    if scheme == FoldScheme::Shuffled {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..n).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
    }
    let folds: Vec<Vec<usize>> =
        (0..k).map(|f| order[f * n / k..(f + 1) * n / k].to_vec()).collect();
    if let Some(small) = folds.iter().find(|f| f.len() < 2) {
        return Err(Error::InsufficientData(format!(
            "cross-validation fold has {} rows; need at least 2",
            small.len()
        )));
    }
    Ok(folds)
}

fn take_rows(x: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), x.ncols(), |r, c| x[(rows[r], c)])
}

/// K-fold cross-validation over `grid`; ties go to the larger lambda.
pub fn cv_select_lambda(
    x: &DMatrix<f64>,
    y: &[f64],
    k: usize,
    grid: &[f64],
    scheme: FoldScheme,
    seed: u64,
) -> Result<CvResult> {
    let n = y.len();
    if k < 2 || n < k {
        return Err(Error::InsufficientData(format!("{k}-fold CV on {n} rows")));
    }
    if grid.is_empty() {
        return Err(Error::InvalidInput("empty lambda grid".into()));
    }
    let folds = fold_assignment(n, k, scheme, seed)?;
    let mut sorted_grid = grid.to_vec();
    sorted_grid.sort_by(|a, b| b.total_cmp(a));
    let per_fold: Vec<Vec<f64>> = folds
        .par_iter()
        .map(|valid| {
            let mut in_valid = vec![false; n];
            valid.iter().for_each(|&i| in_valid[i] = true);
            let train: Vec<usize> = (0..n).filter(|&i| !in_valid[i]).collect();
            let xt = take_rows(x, &train);
            let yt: Vec<f64> = train.iter().map(|&i| y[i]).collect();
            let path = fit_path(&xt, &yt, &sorted_grid)?;
            Ok(path
                .iter()
                .map(|m| {
                    valid
                        .iter()
                        .map(|&i| {
                            let p = m.intercept
                                + (0..x.ncols()).map(|j| x[(i, j)] * m.weights[j]).sum::<f64>();
                            (y[i] - p).powi(2)
                        })
                        .sum::<f64>()
                        / valid.len() as f64
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let mean_errors: Vec<f64> = (0..sorted_grid.len())
        .map(|g| per_fold.iter().map(|f| f[g]).sum::<f64>() / k as f64)
        .collect();
    let mut best = 0;
    for g in 1..mean_errors.len() {
        if mean_errors[g] < mean_errors[best] {
            best = g;
        }
    }
    Ok(CvResult { lambda_star: sorted_grid[best], grid: sorted_grid, mean_errors })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapBand {
    pub level: f64,
    pub n_replicates: usize,
    pub weight_low: Vec<f64>,
    pub weight_high: Vec<f64>,
    pub weight_mean: Vec<f64>,
    /// Per test row: (low, median, high) of replicate predictions.
    pub prediction_low: Vec<f64>,
    pub prediction_point: Vec<f64>,
    pub prediction_high: Vec<f64>,
}

/// Percentile bootstrap: `b_count` resamples of size N with replacement,
/// each refit at `lambda`. Replicate `b` draws from stream `b` of `seed`.
pub fn bootstrap(
    x: &DMatrix<f64>,
    y: &[f64],
    lambda: f64,
    b_count: usize,
    level: f64,
    seed: u64,
    x_test: Option<&DMatrix<f64>>,
) -> Result<BootstrapBand> {
    check_inputs(x, y, lambda)?;
    if b_count == 0 {
        return Err(Error::InvalidInput("bootstrap needs at least one replicate".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidInput(format!("level must lie in (0, 1), got {level}")));
    }
    if let Some(t) = x_test {
        if t.ncols() != x.ncols() {
            return Err(Error::Shape(format!("test has {} columns, train {}", t.ncols(), x.ncols())));
        }
    }
    let (n, k) = x.shape();
    let names = default_names(k);
    let replicates: Vec<(Vec<f64>, Vec<f64>)> = (0..b_count)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let xb = take_rows(x, &rows);
            let yb: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
            let m = coordinate_descent(&names, &xb, &yb, lambda, None);
            let preds = x_test.map_or_else(Vec::new, |t| predict_matrix(&m, t));
            (m.weights, preds)
        })
        .collect();
    let lo_p = (1.0 - level) / 2.0;
    let hi_p = (1.0 + level) / 2.0;
    let summarize = |values: Vec<f64>| {
        let mut v = values;
        v.sort_by(f64::total_cmp);
        (quantile_sorted(&v, lo_p), quantile_sorted(&v, 0.5), quantile_sorted(&v, hi_p))
    };
    let mut band = BootstrapBand {
        level,
        n_replicates: b_count,
        weight_low: Vec::with_capacity(k),
        weight_high: Vec::with_capacity(k),
        weight_mean: Vec::with_capacity(k),
        prediction_low: vec![],
        prediction_point: vec![],
        prediction_high: vec![],
    };
    for j in 0..k {
        let col: Vec<f64> = replicates.iter().map(|r| r.0[j]).collect();
        band.weight_mean.push(col.iter().sum::<f64>() / b_count as f64);
        let (lo, _, hi) = summarize(col);
        band.weight_low.push(lo);
        band.weight_high.push(hi);
    }
    let n_test = x_test.map_or(0, |t| t.nrows());
    for i in 0..n_test {
        let (lo, mid, hi) = summarize(replicates.iter().map(|r| r.1[i]).collect());
        band.prediction_low.push(lo);
        band.prediction_point.push(mid);
        band.prediction_high.push(hi);
    }
    Ok(band)
}

fn predict_matrix(model: &LassoModel, x: &DMatrix<f64>) -> Vec<f64> {
    (0..x.nrows())
        .map(|i| model.intercept + (0..x.ncols()).map(|j| x[(i, j)] * model.weights[j]).sum::<f64>())
        .collect()
}

/// `intercept + X beta`, after checking the column names match the model.
pub fn predict_lasso(model: &LassoModel, features: &FeatureMatrix) -> Result<Vec<f64>> {
    if features.columns != model.feature_names {
        return Err(Error::Shape(format!(
            "feature names differ from the model's ({} vs {} columns)",
            features.columns.len(),
            model.feature_names.len()
        )));
    }
    Ok(predict_matrix(model, &features.values))
}

pub fn predict_lasso_matrix(model: &LassoModel, x: &DMatrix<f64>) -> Result<Vec<f64>> {
    if x.ncols() != model.weights.len() {
        return Err(Error::Shape(format!("{} columns for {} weights", x.ncols(), model.weights.len())));
    }
    Ok(predict_matrix(model, x))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    /// Largest violation of the stationarity conditions.
    pub max_violation: f64,
    pub passed: bool,
}

/// Checks `|X_j'(y - Xb)/N| <= lambda + tol`, with equality to `lambda sign(b_j)`
/// on the support.
pub fn kkt_audit(x: &DMatrix<f64>, y: &[f64], model: &LassoModel, tol: f64) -> KktReport {
    let n = y.len() as f64;
    let preds = predict_matrix(model, x);
    let resid: Vec<f64> = y.iter().zip(&preds).map(|(a, p)| a - p).collect();
    let mut worst = 0.0f64;
    for (j, b) in model.weights.iter().enumerate() {
        let g: f64 = x.column(j).iter().zip(&resid).map(|(a, r)| a * r).sum::<f64>() / n;
        let v = if b.abs() > 1e-12 {
            (g - model.lambda * b.signum()).abs()
        } else {
            (g.abs() - model.lambda).max(0.0)
        };
        worst = worst.max(v);
    }
    KktReport { max_violation: worst, passed: worst <= tol }
}

/// Writes `feature,weight,ci_low,ci_high` in model column order.
pub fn write_weight_report<W: Write>(out: W, model: &LassoModel, band: &BootstrapBand) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["feature", "weight", "ci_low", "ci_high"])?;
    for j in 0..model.weights.len() {
        w.write_record([
            model.feature_names[j].clone(),
            model.weights[j].to_string(),
            band.weight_low[j].to_string(),
            band.weight_high[j].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `date,actual,point,ci_low,ci_high`.
pub fn write_prediction_band<W: Write>(
    out: W,
    dates: &[NaiveDate],
    actual: &[f64],
    point: &[f64],
    band: &BootstrapBand,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["date", "actual", "point", "ci_low", "ci_high"])?;
    for i in 0..dates.len() {
        w.write_record([
            dates[i].to_string(),
            actual[i].to_string(),
            point[i].to_string(),
            band.prediction_low[i].to_string(),
            band.prediction_high[i].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
