//! Conditional-sum-of-squares estimation for ARMA(p, q) with a constant.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::ols;
use crate::stats::schwert_max_lag;

/// Parameter vector layout: `[mu, phi_1..phi_p, theta_1..theta_q]`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Layout {
    pub p: usize,
    pub q: usize,
}

impl Layout {
    pub fn len(self) -> usize {
        1 + self.p + self.q
    }

    /// First index with a full set of lags.
    pub fn start(self) -> usize {
        self.p.max(self.q)
    }

    pub fn split(self, params: &[f64]) -> (f64, &[f64], &[f64]) {
        (params[0], &params[1..1 + self.p], &params[1 + self.p..])
    }
}

/// Innovations `e_t = w_t - mu - sum phi_i w_{t-i} + sum theta_j e_{t-j}`,
/// zero before the first full-lag index. Also returns the one-step
/// predictions (zero where undefined).
pub(crate) fn innovations(w: &[f64], layout: Layout, params: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (mu, phi, theta) = layout.split(params);
    let n = w.len();
    let m = layout.start();
    let mut e = vec![0.0; n];
    let mut pred = vec![0.0; n];
    for t in m..n {
        let mut f = mu;
        for (i, a) in phi.iter().enumerate() {
            f += a * w[t - 1 - i];
        }
        for (j, b) in theta.iter().enumerate() {
            f -= b * e[t - 1 - j];
        }
        pred[t] = f;
        e[t] = w[t] - f;
    }
    (e, pred)
}

/// Mean squared innovation and its gradient.
fn objective(w: &[f64], layout: Layout, params: &[f64]) -> (f64, Vec<f64>) {
    let (_, _, theta) = layout.split(params);
    let (e, _) = innovations(w, layout, params);
    let k = layout.len();
    let n = w.len();
    let m = layout.start();
    let n_eff = (n - m) as f64;
    let mut de = vec![0.0; n * k];
    let mut grad = vec![0.0; k];
    let mut sse = 0.0;
    for t in m..n {
        for c in 0..k {
            let direct = if c == 0 {
                1.0
            } else if c <= layout.p {
                w[t - c]
            } else {
                -e[t - (c - layout.p)]
            };
            let mut d = -direct;
            for (j, b) in theta.iter().enumerate() {
                if t > j {
                    d += b * de[(t - 1 - j) * k + c];
                }
            }
            de[t * k + c] = d;
            grad[c] += 2.0 * e[t] * d;
        }
        sse += e[t] * e[t];
    }
    for g in &mut grad {
        *g /= n_eff;
    }
    (sse / n_eff, grad)
}

/// Largest modulus among the inverse roots of `1 - sum c_i z^i`.
/// Values below 1 mean every root lies outside the unit circle.
pub(crate) fn max_inverse_root(coef: &[f64]) -> f64 {
    let k = coef.len();
    if k == 0 {
        return 0.0;
    }
    if k == 1 {
        return coef[0].abs();
    }
    let companion = DMatrix::from_fn(k, k, |r, c| {
        if r == 0 {
            coef[c]
        } else if r == c + 1 {
            1.0
        } else {
            0.0
        }
    });
    companion.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Inverse-root modulus beyond which an estimate counts as a unit root.
pub(crate) const BOUNDARY: f64 = 0.999;

fn admissible(layout: Layout, params: &[f64]) -> bool {
    let (_, phi, theta) = layout.split(params);
    max_inverse_root(phi) < BOUNDARY && max_inverse_root(theta) < BOUNDARY
}

/// Hannan-Rissanen two-stage regression start, pulled toward zero until
/// stationary and invertible.
pub(crate) fn hannan_rissanen(w: &[f64], layout: Layout) -> Vec<f64> {
    let n = w.len();
    let mean = w.iter().sum::<f64>() / n as f64;
    let mut params = vec![0.0; layout.len()];
    params[0] = mean;
    let lagged = |rows: std::ops::Range<usize>, e: Option<&[f64]>, p: usize, q: usize| {
        let rows: Vec<usize> = rows.collect();
        let x = DMatrix::from_fn(rows.len(), 1 + p + q, |r, c| {
            let t = rows[r];
            if c == 0 {
                1.0
            } else if c <= p {
                w[t - c]
            } else {
                e.map_or(0.0, |e| e[t - (c - p)])
            }
        });
        let y: Vec<f64> = rows.iter().map(|&t| w[t]).collect();
        ols(&x, &y)
    };
    let fit = if layout.q == 0 {
        lagged(layout.p..n, None, layout.p, 0)
    } else {
        let long = (layout.p + layout.q + 1).max(schwert_max_lag(n)).min(n / 4);
        let first = match lagged(long..n, None, long, 0) {
            Ok(f) => f,
            Err(_) => return params,
        };
        let mut e = vec![0.0; n];
        e[long..].copy_from_slice(&first.residuals);
        let start = long + layout.start();
        lagged(start..n, Some(&e), layout.p, layout.q)
    };
    if let Ok(f) = fit {
        params[0] = f.coefficients[0];
        params[1..1 + layout.p].copy_from_slice(&f.coefficients[1..1 + layout.p]);
        for j in 0..layout.q {
            params[1 + layout.p + j] = -f.coefficients[1 + layout.p + j];
        }
    }
    for _ in 0..20 {
        if admissible(layout, &params) {
            break;
        }
        let (_, phi, _) = layout.split(&params);
        let ar_sum: f64 = phi.iter().sum();
        let level = params[0] / (1.0 - ar_sum).max(1e-3);
        for c in params.iter_mut().skip(1) {
            *c *= 0.5;
        }
        let (_, phi, _) = layout.split(&params);
        params[0] = level * (1.0 - phi.iter().sum::<f64>());
    }
    if !admissible(layout, &params) {
        params.iter_mut().skip(1).for_each(|c| *c = 0.0);
        params[0] = mean;
    }
    params
}

pub(crate) struct CssFit {
    pub params: Vec<f64>,
    pub sse: f64,
    pub n_eff: usize,
    pub iterations: usize,
}

const MAX_ITER: usize = 500;

/// Minimizes the CSS objective by BFGS with Armijo backtracking.
pub(crate) fn minimize_css(w: &[f64], layout: Layout, start: Vec<f64>) -> Result<CssFit> {
    let k = layout.len();
    let n_eff = w.len() - layout.start();
    let mut x = DVector::from_vec(start);
    let (mut f, g) = objective(w, layout, x.as_slice());
    if !f.is_finite() {
        return Err(Error::NonFinite("CSS objective at the starting point".into()));
    }
    let mut g = DVector::from_vec(g);
    let mut h = DMatrix::<f64>::identity(k, k);
    let mut fresh = true;
    let mut iterations = 0;
    let converged = |f: f64, g: &DVector<f64>| g.amax() <= 1e-9 * f.max(1.0);
    while !converged(f, &g) {
        if iterations >= MAX_ITER {
            return Err(Error::NoConvergence {
                iterations,
                best_objective: f * n_eff as f64,
                best_params: x.iter().copied().collect(),
            });
        }
        iterations += 1;
        let mut dir = -(&h * &g);
        let mut slope = g.dot(&dir);
        if slope >= 0.0 {
            h = DMatrix::identity(k, k);
            dir = -g.clone();
            slope = g.dot(&dir);
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial = &x + step * &dir;
            let (ft, gt) = objective(w, layout, trial.as_slice());
            if ft.is_finite() && ft <= f + 1e-4 * step * slope {
                accepted = Some((trial, ft, DVector::from_vec(gt)));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fnew, gn)) = accepted else {
            if fresh || g.amax() <= 1e-6 * f.max(1.0) {
                // No descent available along the gradient: a numerical minimum.
                break;
            }
            h = DMatrix::identity(k, k);
            fresh = true;
            continue;
        };
        let s = &xn - &x;
        let y = &gn - &g;
        let sy = s.dot(&y);
        if sy > 1e-14 * s.norm() * y.norm() {
            if fresh {
                h = DMatrix::identity(k, k) * (sy / y.dot(&y));
            }
            let rho = 1.0 / sy;
            let hy = &h * &y;
            let yhy = y.dot(&hy);
            h += (rho * rho * yhy + rho) * &s * s.transpose()
                - rho * (&hy * s.transpose() + &s * hy.transpose());
            fresh = false;
        }
        let small_change = (f - fnew).abs() <= 1e-15 * f.max(1e-300);
        x = xn;
        f = fnew;
        g = gn;
        if small_change && g.amax() <= 1e-6 * f.max(1.0) {
            break;
        }
    }
    let params: Vec<f64> = x.iter().copied().collect();
    let (_, phi, theta) = layout.split(&params);
    let ar = max_inverse_root(phi);
    if ar >= BOUNDARY {
        return Err(Error::Boundary(format!("AR inverse root of modulus {ar:.4}")));
    }
    let ma = max_inverse_root(theta);
    if ma >= BOUNDARY {
        return Err(Error::Boundary(format!("MA inverse root of modulus {ma:.4}")));
    }
    Ok(CssFit { params, sse: f * n_eff as f64, n_eff, iterations })
}
