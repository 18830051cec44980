//! Additive trend + seasonality + holiday model
//! `y(t) = g(t) + s(t) + h(t) + e_t`, fit by block-wise ridge least squares.

mod holidays;

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::Write;

use chrono::{Duration, NaiveDate};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::DateRange;
use crate::error::{Error, Result};
use crate::linalg::{quantile_sorted, solve_spd};

pub use holidays::{easter, make_holiday_calendar, Holiday, HolidayCalendar};

/// Absolute ridge penalties added to the normal-equation diagonal per block.
/// The intercept and base slope are never penalized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RidgeScales {
    pub trend_delta: f64,
    pub seasonal: f64,
    pub holiday: f64,
}

impl Default for RidgeScales {
    fn default() -> Self {
        RidgeScales { trend_delta: 10.0, seasonal: 0.01, holiday: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdditiveConfig {
    /// Spread evenly over the first 80% of the training range.
    pub n_changepoints: usize,
    pub weekly_order: usize,
    pub yearly_order: usize,
    /// Days on either side of a holiday that share its indicator.
    pub holiday_window: i64,
    pub ridge_scales: RidgeScales,
    pub interval_level: f64,
    pub n_simulations: usize,
}

impl Default for AdditiveConfig {
    fn default() -> Self {
        AdditiveConfig {
            n_changepoints: 25,
            weekly_order: 3,
            yearly_order: 10,
            holiday_window: 0,
            ridge_scales: RidgeScales::default(),
            interval_level: 0.95,
            n_simulations: 1000,
        }
    }
}

impl AdditiveConfig {
    pub fn validate(&self) -> Result<()> {
        if self.weekly_order < 1 || self.yearly_order < 1 {
            return Err(Error::Config("Fourier orders must be >= 1".into()));
        }
        if !(self.interval_level > 0.0 && self.interval_level < 1.0) {
            return Err(Error::Config(format!(
                "interval_level must lie in (0, 1), got {}",
                self.interval_level
            )));
        }
        if self.n_simulations == 0 {
            return Err(Error::Config("n_simulations must be positive".into()));
        }
        if self.holiday_window < 0 {
            return Err(Error::Config("holiday_window must be nonnegative".into()));
        }
        let r = self.ridge_scales;
        if [r.trend_delta, r.seasonal, r.holiday].iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Config("ridge scales must be positive".into()));
        }
        Ok(())
    }
}

/// Training shorter than this fits no yearly block.
pub const MIN_DAYS_FOR_YEARLY: usize = 400;
pub const MIN_TRAIN_DAYS: usize = 14;

fn epoch() -> NaiveDate {
    NaiveDate::from_ymd_opt(1970, 1, 1).expect("epoch")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
enum Block {
    Base,
    Changepoint,
    Weekly,
    Yearly,
    Holiday,
}

#[derive(Debug, Clone)]
pub struct Design {
    pub matrix: DMatrix<f64>,
    pub labels: Vec<String>,
    blocks: Vec<Block>,
}

/// Column layout shared by fitting and prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Layout {
    train_range: DateRange,
    changepoints: Vec<NaiveDate>,
    weekly_order: usize,
    yearly_order: Option<usize>,
    holidays: Option<i64>,
}

impl Layout {
    fn new(config: &AdditiveConfig, train_range: DateRange, yearly: bool, holidays: bool) -> Self {
        let span = train_range.len_days() as i64 - 1;
        let horizon = 0.8 * span as f64;
        let mut changepoints: Vec<NaiveDate> = (1..=config.n_changepoints)
            .map(|k| {
                let off = (horizon * k as f64 / config.n_changepoints as f64).round() as i64;
                train_range.start + Duration::days(off)
            })
            .filter(|d| *d > train_range.start)
            .collect();
        changepoints.dedup();
        Layout {
            train_range,
            changepoints,
            weekly_order: config.weekly_order,
            yearly_order: yearly.then_some(config.yearly_order),
            holidays: holidays.then_some(config.holiday_window),
        }
    }

    fn scaled_time(&self, date: NaiveDate) -> f64 {
        let span = (self.train_range.len_days() as f64 - 1.0).max(1.0);
        (date - self.train_range.start).num_days() as f64 / span
    }

    fn build(&self, dates: &[NaiveDate], calendar: Option<&HolidayCalendar>) -> Design {
        let mut labels = vec!["intercept".to_string(), "t".to_string()];
        let mut blocks = vec![Block::Base, Block::Base];
        for cp in &self.changepoints {
            labels.push(format!("changepoint_{cp}"));
            blocks.push(Block::Changepoint);
        }
        for m in 1..=self.weekly_order {
            labels.push(format!("weekly_sin_{m}"));
            labels.push(format!("weekly_cos_{m}"));
            blocks.extend([Block::Weekly, Block::Weekly]);
        }
        if let Some(order) = self.yearly_order {
            for m in 1..=order {
                labels.push(format!("yearly_sin_{m}"));
                labels.push(format!("yearly_cos_{m}"));
                blocks.extend([Block::Yearly, Block::Yearly]);
            }
        }
        if self.holidays.is_some() {
            for h in Holiday::ALL {
                labels.push(format!("holiday_{h}"));
                blocks.push(Block::Holiday);
            }
        }
        let owned;
        let calendar = match (self.holidays, calendar) {
            (None, _) => None,
            (Some(_), Some(c)) => Some(c),
            (Some(_), None) => {
                owned = calendar_for(dates);
                Some(&owned)
            }
        };
        let mut matrix = DMatrix::zeros(dates.len(), labels.len());
        for (r, &date) in dates.iter().enumerate() {
            let row = self.row(date, calendar);
            matrix.row_mut(r).copy_from_slice(&row);
        }
        Design { matrix, labels, blocks }
    }

    fn row(&self, date: NaiveDate, calendar: Option<&HolidayCalendar>) -> Vec<f64> {
        let t = self.scaled_time(date);
        let mut row = vec![1.0, t];
        for cp in &self.changepoints {
            row.push((t - self.scaled_time(*cp)).max(0.0));
        }
        let dow = crate::data::weekday_index(date) as f64;
        for m in 1..=self.weekly_order {
            let a = 2.0 * PI * m as f64 * dow / 7.0;
            row.extend([a.sin(), a.cos()]);
        }
        if let Some(order) = self.yearly_order {
            let days = (date - epoch()).num_days() as f64;
            for m in 1..=order {
                let a = 2.0 * PI * m as f64 * days / 365.25;
                row.extend([a.sin(), a.cos()]);
            }
        }
        if let (Some(window), Some(cal)) = (self.holidays, calendar) {
            let start = row.len();
            row.extend([0.0; 10]);
            for h in cal.active_on(date, window) {
                row[start + h as usize] = 1.0;
            }
        }
        row
    }
}

fn calendar_for(dates: &[NaiveDate]) -> HolidayCalendar {
    use chrono::Datelike;
    let lo = dates.iter().map(|d| d.year()).min().unwrap_or(1970);
    let hi = dates.iter().map(|d| d.year()).max().unwrap_or(1970);
    // One extra year each side so windows can straddle New Year.
    make_holiday_calendar(lo - 1..=hi + 1)
}

/// Design matrix with columns `[1, t, relu(t - cp_k).., weekly sin/cos.., yearly sin/cos.., holiday indicators..]`.
/// `t` is days from the training start scaled to `[0, 1]` over the training range.
/// Passing `None` for the calendar omits the holiday block.
pub fn design_matrix(
    dates: &[NaiveDate],
    config: &AdditiveConfig,
    calendar: Option<&HolidayCalendar>,
    train_range: DateRange,
) -> Design {
    let yearly = train_range.len_days() >= MIN_DAYS_FOR_YEARLY;
    let layout = Layout::new(config, train_range, yearly, calendar.is_some());
    layout.build(dates, calendar)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdditiveModel {
    pub base_intercept: f64,
    pub base_slope: f64,
    pub changepoint_dates: Vec<NaiveDate>,
    pub changepoint_deltas: Vec<f64>,
    pub weekly_coeffs: Vec<f64>,
    pub yearly_coeffs: Vec<f64>,
    /// Empty when the model was fit without holidays.
    pub holiday_effects: BTreeMap<String, f64>,
    pub residual_sigma: f64,
    /// Set when the training range was too short for a yearly block.
    pub yearly_disabled: bool,
    pub config: AdditiveConfig,
    layout: Layout,
    coefficients: Vec<f64>,
}

fn fit(dates: &[NaiveDate], y: &[f64], config: &AdditiveConfig, holidays: bool) -> Result<AdditiveModel> {
    config.validate()?;
    if dates.len() != y.len() {
        return Err(Error::Shape(format!("{} dates but {} values", dates.len(), y.len())));
    }
    if dates.len() < MIN_TRAIN_DAYS {
        return Err(Error::InsufficientData(format!(
            "additive model needs at least {MIN_TRAIN_DAYS} days, got {}",
            dates.len()
        )));
    }
    if dates.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("training dates must be strictly increasing".into()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("additive model target".into()));
    }
    let train_range = DateRange::new(dates[0], *dates.last().expect("nonempty"))?;
    let yearly = train_range.len_days() >= MIN_DAYS_FOR_YEARLY;
    let layout = Layout::new(config, train_range, yearly, holidays);
    let design = layout.build(dates, None);
    let x = &design.matrix;
    let mut xtx = x.transpose() * x;
    for (j, block) in design.blocks.iter().enumerate() {
        let penalty = match block {
            Block::Base => 0.0,
            Block::Changepoint => config.ridge_scales.trend_delta,
            Block::Weekly | Block::Yearly => config.ridge_scales.seasonal,
            Block::Holiday => config.ridge_scales.holiday,
        };
        xtx[(j, j)] += penalty;
    }
    let xty = x.transpose() * DVector::from_column_slice(y);
    let beta = solve_spd(xtx, &xty)?;
    let fitted = x * &beta;
    let sse: f64 = y.iter().zip(fitted.iter()).map(|(a, b)| (a - b).powi(2)).sum();
    let residual_sigma = (sse / y.len() as f64).sqrt();

    let coefficients: Vec<f64> = beta.iter().copied().collect();
    let pick = |b: Block| -> Vec<f64> {
        design.blocks.iter().zip(&coefficients).filter(|(k, _)| **k == b).map(|(_, c)| *c).collect()
    };
    let holiday_effects = if holidays {
        Holiday::ALL.iter().map(|h| h.name().to_string()).zip(pick(Block::Holiday)).collect()
    } else {
        BTreeMap::new()
    };
    Ok(AdditiveModel {
        base_intercept: coefficients[0],
        base_slope: coefficients[1],
        changepoint_dates: layout.changepoints.clone(),
        changepoint_deltas: pick(Block::Changepoint),
        weekly_coeffs: pick(Block::Weekly),
        yearly_coeffs: pick(Block::Yearly),
        holiday_effects,
        residual_sigma,
        yearly_disabled: !yearly,
        config: *config,
        layout,
        coefficients,
    })
}

pub fn fit_additive(dates: &[NaiveDate], y: &[f64], config: &AdditiveConfig) -> Result<AdditiveModel> {
    fit(dates, y, config, true)
}

pub fn fit_without_holidays(
    dates: &[NaiveDate],
    y: &[f64],
    config: &AdditiveConfig,
) -> Result<AdditiveModel> {
    fit(dates, y, config, false)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Components {
    pub trend: Vec<f64>,
    pub weekly: Vec<f64>,
    pub yearly: Vec<f64>,
    pub holiday: Vec<f64>,
    /// `trend + weekly + yearly + holiday`.
    pub point: Vec<f64>,
}

pub fn components(model: &AdditiveModel, dates: &[NaiveDate]) -> Components {
    let design = model.layout.build(dates, None);
    let n = dates.len();
    let mut parts = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for (j, block) in design.blocks.iter().enumerate() {
        let slot = match block {
            Block::Base | Block::Changepoint => 0,
            Block::Weekly => 1,
            Block::Yearly => 2,
            Block::Holiday => 3,
        };
        let c = model.coefficients[j];
        for (i, v) in parts[slot].iter_mut().enumerate() {
            *v += c * design.matrix[(i, j)];
        }
    }
    let [trend, weekly, yearly, holiday] = parts;
    let point = (0..n).map(|i| trend[i] + weekly[i] + yearly[i] + holiday[i]).collect();
    Components { trend, weekly, yearly, holiday, point }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdditiveForecast {
    pub point: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Point forecast with simulated Gaussian-residual intervals. Draws for the
/// `i`-th date come from their own stream of `seed`, so output does not depend
/// on thread count.
pub fn predict_additive(model: &AdditiveModel, dates: &[NaiveDate], seed: u64) -> AdditiveForecast {
    let point = components(model, dates).point;
    let level = model.config.interval_level;
    let sims = model.config.n_simulations;
    let sigma = model.residual_sigma;
    let (lower, upper): (Vec<f64>, Vec<f64>) = point
        .par_iter()
        .enumerate()
        .map(|(i, &p)| {
            if sigma == 0.0 {
                return (p, p);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let mut draws: Vec<f64> = (0..sims)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    p + sigma * z
                })
                .collect();
            draws.sort_by(f64::total_cmp);
            (
                quantile_sorted(&draws, (1.0 - level) / 2.0),
                quantile_sorted(&draws, (1.0 + level) / 2.0),
            )
        })
        .unzip();
    AdditiveForecast { point, lower, upper }
}

/// Writes `date,trend,weekly,yearly,holiday,point,lower,upper`.
pub fn write_components_csv<W: Write>(
    out: W,
    dates: &[NaiveDate],
    parts: &Components,
    forecast: &AdditiveForecast,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["date", "trend", "weekly", "yearly", "holiday", "point", "lower", "upper"])?;
    for (i, d) in dates.iter().enumerate() {
        let vals = [
            parts.trend[i],
            parts.weekly[i],
            parts.yearly[i],
            parts.holiday[i],
            forecast.point[i],
            forecast.lower[i],
            forecast.upper[i],
        ];
        let mut rec = vec![d.to_string()];
        rec.extend(vals.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
