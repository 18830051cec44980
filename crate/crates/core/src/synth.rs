//! Seeded synthetic transfusion data with planted, logged structure.
//!
//! Daily intensity is
//!
//! ```text
//! level + trend + day-of-week + month + holiday + s_d
//! s_d = phi s_{d-1} + sum_k w_k z_{k,d} + e_d
//! ```
//!
//! where `z_k` are standardized lab-acuity signals sharing a common factor.
//! Demand is the intensity rounded and truncated at zero. The level is solved
//! so the expected mean over the range equals `overall_mean`, and the noise
//! scale so the expected sd equals `overall_sd`. Received units are the
//! previous day's demand plus a Monday spike, a Sunday trough and noise
//! scaled to `received_sd`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use chrono::{Datelike, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::additive::{make_holiday_calendar, Holiday};
use crate::data::{
    write_granular_csv, write_received_csv, DailyAggregate, DateRange, Lab, LabFlag, LabFlags, Location,
    TransfusionRecord,
};
use crate::error::{Error, Result};
use crate::linalg::{mean, variance};

/// Labs whose acuity signals carry planted demand weights.
pub const PLANTED_LABS: [Lab; 3] = [Lab::Plt, Lab::Hb, Lab::RedCellWidth];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CovariateModel {
    /// Demand weights on the standardized acuity signals of [`PLANTED_LABS`].
    pub plt: f64,
    pub hb: f64,
    pub redcellwidth: f64,
    /// Carry-over of yesterday's stochastic deviation.
    pub yesterday: f64,
    /// Share of each acuity signal's variance from the common factor.
    pub acuity_correlation: f64,
}

impl Default for CovariateModel {
    fn default() -> Self {
        CovariateModel { plt: 2.0, hb: 1.2, redcellwidth: 0.8, yesterday: 0.3, acuity_correlation: 0.4 }
    }
}

impl CovariateModel {
    fn weights(&self) -> [f64; 3] {
        [self.plt, self.hb, self.redcellwidth]
    }

    /// Variance of `sum_k w_k z_k` under the shared-factor correlation.
    fn signal_variance(&self) -> f64 {
        let w = self.weights();
        let rho = self.acuity_correlation;
        let sum: f64 = w.iter().sum();
        let sq: f64 = w.iter().map(|v| v * v).sum();
        rho * sum * sum + (1.0 - rho) * sq
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub range: DateRange,
    pub overall_mean: f64,
    pub overall_sd: f64,
    /// Mean demand by weekday, Monday first; only differences from their
    /// average enter the intensity.
    pub dow_means: [f64; 7],
    /// Additive offsets by month, January first.
    pub monthly_offsets: [f64; 12],
    /// Linear drift in units per year, centred on the range midpoint.
    pub trend_per_year: f64,
    pub holiday_effects: BTreeMap<Holiday, f64>,
    pub covariate_model: CovariateModel,
    /// Innovation sd; solved from `overall_sd` when absent.
    pub noise_sd: Option<f64>,
    pub received_sd: f64,
    pub monday_spike: f64,
    pub sunday_trough: f64,
    pub seed: u64,
}

fn ymd(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).expect("valid literal date")
}

pub fn default_holiday_effects() -> BTreeMap<Holiday, f64> {
    use Holiday::*;
    [
        (NewYearsDay, -8.0),
        (FamilyDay, -6.0),
        (GoodFriday, -7.0),
        (VictoriaDay, -6.0),
        (CanadaDay, 2.0),
        (CivicHoliday, -5.0),
        (LabourDay, -6.0),
        (Thanksgiving, -6.0),
        (Christmas, -9.0),
        (BoxingDay, -7.0),
    ]
    .into_iter()
    .collect()
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            range: DateRange { start: ymd(2010, 1, 1), end: ymd(2018, 12, 31) },
            overall_mean: 17.90,
            overall_sd: 7.05,
            dow_means: [20.04, 21.68, 21.50, 21.40, 21.38, 12.60, 12.14],
            // January and July are anchored; the other months are interpolated.
            monthly_offsets: [-0.3, -0.9, -0.6, -0.4, 0.1, 0.9, 2.4, 1.0, 0.0, -0.4, -0.9, -0.9],
            trend_per_year: 0.25,
            holiday_effects: default_holiday_effects(),
            covariate_model: CovariateModel::default(),
            noise_sd: None,
            received_sd: 9.33,
            monday_spike: 6.0,
            sunday_trough: 6.0,
            seed: 0,
        }
    }
}

/// Latent components of one day; `intensity` is their sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayTruth {
    pub date: NaiveDate,
    pub level: f64,
    pub trend: f64,
    pub dow: f64,
    pub month: f64,
    pub holiday: f64,
    /// `sum_k w_k z_k`.
    pub covariate: f64,
    /// `phi s_{d-1}`.
    pub carry: f64,
    pub noise: f64,
    pub intensity: f64,
    /// Acuity signals of [`PLANTED_LABS`] and the common factor.
    pub acuity: [f64; 3],
    pub common_factor: f64,
    pub demand: u32,
    pub received: u32,
}

impl DayTruth {
    pub fn component_sum(&self) -> f64 {
        self.level + self.trend + self.dow + self.month + self.holiday + self.covariate + self.carry + self.noise
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub config: SynthConfig,
    pub noise_sd: f64,
    pub received_noise_sd: f64,
    pub days: Vec<DayTruth>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub records: Vec<TransfusionRecord>,
    pub received: BTreeMap<NaiveDate, u32>,
    /// Aggregates counted while the records were fabricated.
    pub daily: Vec<DailyAggregate>,
    pub truth: GroundTruth,
}

/// True coefficients and per-day components for oracle checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantReport {
    /// Feature name to planted weight on its acuity signal.
    pub coefficients: BTreeMap<String, f64>,
    pub yesterday_carry: f64,
    pub holiday_effects: BTreeMap<String, f64>,
    pub days: Vec<DayTruth>,
}

struct Deterministic {
    level: f64,
    parts: Vec<[f64; 4]>,
}

fn weekday_spike(config: &SynthConfig, d: NaiveDate) -> f64 {
    match d.weekday() {
        Weekday::Mon => config.monday_spike,
        Weekday::Sun => -config.sunday_trough,
        _ => 0.0,
    }
}

fn deterministic(config: &SynthConfig) -> Deterministic {
    let range = config.range;
    let dow_avg = config.dow_means.iter().sum::<f64>() / 7.0;
    let cal = make_holiday_calendar(range.start.year()..=range.end.year());
    let mid = (range.len_days() as f64 - 1.0) / 2.0;
    let parts: Vec<[f64; 4]> = range
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let trend = config.trend_per_year * (i as f64 - mid) / 365.25;
            let dow = config.dow_means[d.weekday().num_days_from_monday() as usize] - dow_avg;
            let month = config.monthly_offsets[d.month0() as usize];
            let holiday: f64 =
                cal.active_on(d, 0).map(|h| config.holiday_effects.get(&h).copied().unwrap_or(0.0)).sum();
            [trend, dow, month, holiday]
        })
        .collect();
    let sums: Vec<f64> = parts.iter().map(|p| p.iter().sum()).collect();
    Deterministic { level: config.overall_mean - mean(&sums), parts }
}

fn validate(config: &SynthConfig) -> Result<()> {
    let c = &config.covariate_model;
    if !(0.0..1.0).contains(&c.yesterday.abs()) {
        return Err(Error::Config(format!("yesterday carry must lie in (-1, 1), got {}", c.yesterday)));
    }
    if !(0.0..=1.0).contains(&c.acuity_correlation) {
        return Err(Error::Config("acuity_correlation must lie in [0, 1]".into()));
    }
    let numbers = [config.overall_mean, config.overall_sd, config.received_sd, config.trend_per_year]
        .into_iter()
        .chain(config.dow_means)
        .chain(config.monthly_offsets)
        .chain(config.holiday_effects.values().copied())
        .chain(c.weights());
    if numbers.into_iter().any(|v| !v.is_finite()) || config.noise_sd.is_some_and(|s| !(s >= 0.0)) {
        return Err(Error::Config("synthetic configuration has non-finite or negative entries".into()));
    }
    Ok(())
}

/// Draws daily demand, received units and the component log, without
/// fabricating granular records.
pub fn generate_latent(config: &SynthConfig) -> Result<GroundTruth> {
    validate(config)?;
    let det = deterministic(config);
    let sums: Vec<f64> = det.parts.iter().map(|p| det.level + p.iter().sum::<f64>()).collect();
    if sums.iter().all(|v| *v < 0.0) {
        return Err(Error::Config("expected intensity is negative on every day".into()));
    }
    let cov = &config.covariate_model;
    let phi = cov.yesterday;
    let signal_var = cov.signal_variance();
    // Rounding adds roughly 1/12 to the variance.
    let stoch_var = config.overall_sd.powi(2) - variance(&sums) - 1.0 / 12.0;
    let noise_sd = match config.noise_sd {
        Some(s) => s,
        None => {
            let v = (1.0 - phi * phi) * stoch_var - signal_var;
            if v <= 0.0 {
                return Err(Error::Config(format!(
                    "overall_sd {} is too small for the planted structure",
                    config.overall_sd
                )));
            }
            v.sqrt()
        }
    };
    let s_var = (signal_var + noise_sd * noise_sd) / (1.0 - phi * phi);
    let lagged: Vec<f64> = (0..sums.len())
        .map(|i| sums[i.saturating_sub(1)] + weekday_spike(config, config.range.start + chrono::Days::new(i as u64)))
        .collect();
    let rv = config.received_sd.powi(2) - variance(&lagged) - s_var - 1.0 / 12.0;
    if rv <= 0.0 {
        return Err(Error::Config(format!("received_sd {} is below the demand-driven spread", config.received_sd)));
    }
    let received_noise_sd = rv.sqrt();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
    let rho = cov.acuity_correlation;
    let w = cov.weights();
    let mut s_prev = 0.0;
    let mut prev_demand: Option<u32> = None;
    let mut days = Vec::with_capacity(sums.len());
    for (i, date) in config.range.iter().enumerate() {
        let common = normal();
        let mut acuity = [0.0; 3];
        for a in &mut acuity {
            *a = rho.sqrt() * common + (1.0 - rho).sqrt() * normal();
        }
        let covariate: f64 = w.iter().zip(&acuity).map(|(a, b)| a * b).sum();
        let noise = noise_sd * normal();
        let carry = phi * s_prev;
        s_prev = carry + covariate + noise;
        let [trend, dow, month, holiday] = det.parts[i];
        let mut day = DayTruth {
            date,
            level: det.level,
            trend,
            dow,
            month,
            holiday,
            covariate,
            carry,
            noise,
            intensity: 0.0,
            acuity,
            common_factor: common,
            demand: 0,
            received: 0,
        };
        day.intensity = day.component_sum();
        day.demand = day.intensity.round().max(0.0) as u32;
        let base = prev_demand.map_or(sums[i].round().max(0.0), f64::from);
        let r = base + weekday_spike(config, date) + received_noise_sd * normal();
        day.received = r.round().max(0.0) as u32;
        prev_demand = Some(day.demand);
        days.push(day);
    }
    Ok(GroundTruth { config: config.clone(), noise_sd, received_noise_sd, days })
}

/// Share of transfused patients per ward.
const LOCATION_SHARE: [f64; Location::COUNT] = [0.25, 0.30, 0.15, 0.15, 0.05, 0.10];
/// Logit of the baseline abnormal rate per lab, in [`Lab::ALL`] order.
const LAB_BASE_LOGIT: [f64; Lab::COUNT] =
    [-1.0, -0.4, 0.8, -1.2, -0.6, -0.3, -0.8, -0.9, 1.0, -0.7, 1.5, 0.2, 0.1, -0.5];
const MISSING_RATE: f64 = 0.03;

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn pick_location(rng: &mut ChaCha8Rng) -> Location {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (loc, share) in Location::ALL.iter().zip(LOCATION_SHARE) {
        acc += share;
        if u < acc {
            return *loc;
        }
    }
    Location::Other
}

/// Full generation: latent series plus granular records whose per-day
/// aggregates reproduce the logged demand.
pub fn generate(config: &SynthConfig) -> Result<SynthData> {
    let truth = generate_latent(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut records = Vec::new();
    let mut daily = Vec::with_capacity(truth.days.len());
    let mut received = BTreeMap::new();
    for day in &truth.days {
        received.insert(day.date, day.received);
        let mut agg = DailyAggregate::empty(day.date, day.received);
        agg.units_transfused = day.demand;
        let mut remaining = day.demand;
        let mut patient = 0u32;
        while remaining > 0 {
            let extra = u32::from(rng.random_bool(0.25)) + u32::from(rng.random_bool(0.08));
            let units = (1 + extra).min(remaining);
            remaining -= units;
            let location = pick_location(&mut rng);
            let mut flags = LabFlags::default();
            for lab in Lab::ALL {
                let signal = match PLANTED_LABS.iter().position(|l| *l == lab) {
                    Some(k) => 0.8 * day.acuity[k],
                    None => 0.5 * day.common_factor,
                };
                let flag = if rng.random_bool(MISSING_RATE) {
                    LabFlag::Missing
                } else if rng.random_bool(sigmoid(LAB_BASE_LOGIT[lab.index()] + signal)) {
                    agg.abnormal_counts[lab.index()] += 1;
                    LabFlag::Abnormal
                } else {
                    LabFlag::Normal
                };
                flags.set(lab, flag);
            }
            agg.patients += 1;
            agg.location_counts[location.index()] += 1;
            let patient_id = format!("{}-{patient:03}", day.date.format("%Y%m%d"));
            for _ in 0..units {
                records.push(TransfusionRecord { date: day.date, patient_id: patient_id.clone(), location, lab_flags: flags });
            }
            patient += 1;
        }
        daily.push(agg);
    }
    Ok(SynthData { records, received, daily, truth })
}

pub fn plant_report(truth: &GroundTruth) -> PlantReport {
    let c = &truth.config.covariate_model;
    let coefficients = PLANTED_LABS
        .iter()
        .zip(c.weights())
        .map(|(lab, w)| (lab.column(), w))
        .collect();
    PlantReport {
        coefficients,
        yesterday_carry: c.yesterday,
        holiday_effects: truth.config.holiday_effects.iter().map(|(h, v)| (h.name().to_string(), *v)).collect(),
        days: truth.days.clone(),
    }
}

/// Writes `granular.csv`, `received.csv` and `truth.json` into `dir`.
pub fn write_synth(data: &SynthData, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_granular_csv(&data.records, BufWriter::new(File::create(dir.join("granular.csv"))?))?;
    write_received_csv(&data.received, BufWriter::new(File::create(dir.join("received.csv"))?))?;
    serde_json::to_writer_pretty(BufWriter::new(File::create(dir.join("truth.json"))?), &data.truth)?;
    Ok(())
}
