//! Hyndman-Khandakar stepwise order search.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{aic, difference, fit_arma, ArimaModel, ArimaOrder};
use crate::error::{Error, Result};
use crate::stats::adf_test;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub max_p: usize,
    pub max_q: usize,
    pub max_d: usize,
    /// Fit the candidate orders of each round on the rayon pool.
    pub parallel: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig { max_p: 5, max_q: 5, max_d: 2, parallel: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub order: ArimaOrder,
    /// `None` when the fit failed (non-convergence, boundary estimate, too short).
    pub aic: Option<f64>,
    /// Selection criterion, see [`common_sample_aic`].
    pub common_aic: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub model: ArimaModel,
    /// Start index of the shared scoring window (`max(max_p, max_q)`).
    pub common_start: usize,
    /// Every order that was fitted, in (p, q) order.
    pub candidates: Vec<Candidate>,
}

#[derive(Debug, Clone)]
struct Scored {
    model: ArimaModel,
    /// AIC over the innovations from the common start index.
    score: f64,
}

/// Selection rule: lowest AIC, then smaller p + q, then smaller p.
fn better(a: &Scored, b: &Scored) -> Ordering {
    let (a_ord, b_ord) = (a.model.order, b.model.order);
    a.score
        .total_cmp(&b.score)
        .then((a_ord.p + a_ord.q).cmp(&(b_ord.p + b_ord.q)))
        .then(a_ord.p.cmp(&b_ord.p))
}

/// AIC of `model` on the innovations from index `common` of the differenced
/// series, so every candidate is scored on the same observations.
pub fn common_sample_aic(model: &ArimaModel, common: usize) -> Result<f64> {
    let skip = common.saturating_sub(model.order.p.max(model.order.q));
    let tail = &model.residuals[skip.min(model.residuals.len())..];
    let sse: f64 = tail.iter().map(|e| e * e).sum();
    aic(sse, tail.len(), model.order.p + model.order.q + 2)
}

const STARTS: [(usize, usize); 4] = [(0, 0), (1, 0), (0, 1), (2, 2)];

/// Differencing order chosen by ADF, then a stepwise (p, q) search.
pub fn auto_arima(series: &[f64]) -> Result<ArimaModel> {
    Ok(stepwise_search(series, &SearchConfig::default())?.model)
}

/// Smallest `d` whose differenced series rejects the ADF unit root; `max_d` when none does.
fn choose_d(series: &[f64], max_d: usize) -> Result<usize> {
    for d in 0..max_d {
        let w = difference(series, d)?;
        if adf_test(&w, None)?.result.reject_at_5pct {
            return Ok(d);
        }
    }
    Ok(max_d)
}

pub fn stepwise_search(series: &[f64], config: &SearchConfig) -> Result<SearchOutcome> {
    if series.len() < 60 {
        return Err(Error::InsufficientData(format!(
            "order search needs at least 60 points, got {}",
            series.len()
        )));
    }
    let d = choose_d(series, config.max_d)?;
    let w = difference(series, d)?;
    let common = config.max_p.max(config.max_q);
    let mut fitted: BTreeMap<(usize, usize), Option<Scored>> = BTreeMap::new();

    let evaluate = |orders: Vec<(usize, usize)>, fitted: &mut BTreeMap<_, Option<Scored>>| {
        let todo: Vec<(usize, usize)> =
            orders.into_iter().filter(|o| !fitted.contains_key(o)).collect();
        let fit = |&(p, q): &(usize, usize)| {
            let scored = fit_arma(&w, p, q).ok().and_then(|mut model| {
                model.order.d = d;
                let score = common_sample_aic(&model, common).ok()?;
                Some(Scored { model, score })
            });
            ((p, q), scored)
        };
        let results: Vec<_> = if config.parallel {
            todo.par_iter().map(fit).collect()
        } else {
            todo.iter().map(fit).collect()
        };
        fitted.extend(results);
    };

    let starts: Vec<(usize, usize)> = STARTS
        .iter()
        .copied()
        .filter(|&(p, q)| p <= config.max_p && q <= config.max_q)
        .collect();
    evaluate(starts.clone(), &mut fitted);
    let mut current = starts
        .iter()
        .filter_map(|o| fitted[o].as_ref())
        .min_by(|a, b| better(a, b))
        .cloned()
        .ok_or_else(|| Error::InvalidInput("no starting ARMA order could be fitted".into()))?;

    loop {
        let (p, q) = (current.model.order.p, current.model.order.q);
        let neighbours: Vec<(usize, usize)> = [(-1, 0), (1, 0), (0, -1), (0, 1), (-1, -1), (1, 1), (1, -1), (-1, 1)]
            .iter()
            .filter_map(|&(dp, dq): &(i64, i64)| {
                let np = p as i64 + dp;
                let nq = q as i64 + dq;
                (np >= 0 && nq >= 0 && np as usize <= config.max_p && nq as usize <= config.max_q)
                    .then_some((np as usize, nq as usize))
            })
            .collect();
        evaluate(neighbours.clone(), &mut fitted);
        // First improvement in the fixed neighbour order.
        let next = neighbours
            .iter()
            .filter_map(|o| fitted[o].as_ref())
            .find(|c| better(c, &current) == Ordering::Less);
        match next {
            Some(c) => current = c.clone(),
            None => break,
        }
    }

    let candidates = fitted
        .iter()
        .map(|(&(p, q), m)| Candidate {
            order: ArimaOrder::new(p, d, q),
            aic: m.as_ref().map(|m| m.model.aic),
            common_aic: m.as_ref().map(|m| m.score),
        })
        .collect();
    Ok(SearchOutcome { model: current.model, common_start: common, candidates })
}
