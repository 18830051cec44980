use chrono::{Datelike, NaiveDate};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{DailyAggregate, DateRange, Lab, Location};
use crate::error::{Error, Result};

pub const N_FEATURES: usize = 29;

/// Feature columns in table order.
pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "abnormal_ALP",
    "abnormal_MPV",
    "abnormal_hematocrit",
    "abnormal_PO2",
    "abnormal_creatinine",
    "abnormal_INR",
    "abnormal_MCHb",
    "abnormal_MCHb_conc",
    "abnormal_hb",
    "abnormal_mcv",
    "abnormal_plt",
    "abnormal_redcellwidth",
    "abnormal_wbc",
    "abnormal_ALC",
    "location_GeneralMedicine",
    "location_Hematology",
    "location_IntensiveCare",
    "location_CardiovascularSurgery",
    "location_Pediatric",
    "Monday",
    "Tuesday",
    "Wednesday",
    "Thursday",
    "Friday",
    "Saturday",
    "Sunday",
    "lastWeek_Usage",
    "yesterday_Usage",
    "yesterday_ReceivedUnits",
];

const DOW_OFFSET: usize = 19;
const LAST_WEEK: usize = 26;
const YESTERDAY: usize = 27;
const YESTERDAY_RECEIVED: usize = 28;

/// Mean and scale used to standardize one column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub mean: f64,
    /// Population standard deviation (divisor N).
    pub scale: f64,
}

/// Date-aligned design matrix with its demand target.
///
/// `values` holds raw feature values until [`FeatureMatrix::standardize`] is
/// applied, after which `stats` records the transform.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub dates: Vec<NaiveDate>,
    pub columns: Vec<String>,
    pub values: DMatrix<f64>,
    pub target: Vec<f64>,
    pub stats: Option<Vec<ColumnStats>>,
}

/// Builds the 29-column feature table from consecutive daily aggregates.
///
/// The first seven days only feed the lag columns and are not emitted.
/// `lastWeek_Usage` on day d is the sum of units transfused on d-7..=d-1.
pub fn build_features(daily: &[DailyAggregate]) -> Result<FeatureMatrix> {
    if daily.len() < 8 {
        return Err(Error::InsufficientData(format!(
            "need at least 8 consecutive days, got {}",
            daily.len()
        )));
    }
    for w in daily.windows(2) {
        if w[0].date.succ_opt() != Some(w[1].date) {
            return Err(Error::InvalidInput(format!(
                "daily aggregates not consecutive between {} and {}",
                w[0].date, w[1].date
            )));
        }
    }
    let n = daily.len() - 7;
    let mut values = DMatrix::zeros(n, N_FEATURES);
    let mut dates = Vec::with_capacity(n);
    let mut target = Vec::with_capacity(n);
    for (row, i) in (7..daily.len()).enumerate() {
        let day = &daily[i];
        for lab in Lab::ALL {
            values[(row, lab.index())] = day.abnormal(lab) as f64;
        }
        for (k, loc) in Location::FEATURED.iter().enumerate() {
            values[(row, Lab::COUNT + k)] = day.at_location(*loc) as f64;
        }
        values[(row, DOW_OFFSET + weekday_index(day.date))] = 1.0;
        values[(row, LAST_WEEK)] =
            daily[i - 7..i].iter().map(|d| d.units_transfused as f64).sum();
        values[(row, YESTERDAY)] = daily[i - 1].units_transfused as f64;
        values[(row, YESTERDAY_RECEIVED)] = daily[i - 1].units_received as f64;
        dates.push(day.date);
        target.push(day.units_transfused as f64);
    }
    Ok(FeatureMatrix {
        dates,
        columns: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        values,
        target,
        stats: None,
    })
}

/// Monday = 0 .. Sunday = 6.
pub(crate) fn weekday_index(date: NaiveDate) -> usize {
    date.weekday().num_days_from_monday() as usize
}

impl FeatureMatrix {
    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.values.ncols()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        self.column_index(name).map(|j| self.values.column(j).iter().copied().collect())
    }

    pub fn is_standardized(&self) -> bool {
        self.stats.is_some()
    }

    /// Standardizes every column as `(x - mean) / scale`.
    ///
    /// With `stats = None` the statistics are computed from this matrix
    /// (training mode) and a constant column is an error. With `Some`, the
    /// given (training) statistics are applied as-is.
    pub fn standardize(&self, stats: Option<&[ColumnStats]>) -> Result<FeatureMatrix> {
        if self.stats.is_some() {
            return Err(Error::InvalidInput("matrix is already standardized".into()));
        }
        let stats: Vec<ColumnStats> = match stats {
            Some(s) => {
                if s.len() != self.n_cols() {
                    return Err(Error::Shape(format!(
                        "{} column statistics for {} columns",
                        s.len(),
                        self.n_cols()
                    )));
                }
                s.to_vec()
            }
            None => {
                if self.n_rows() == 0 {
                    return Err(Error::InsufficientData("cannot standardize an empty matrix".into()));
                }
                let n = self.n_rows() as f64;
                self.values
                    .column_iter()
                    .zip(&self.columns)
                    .map(|(col, name)| {
                        let mean = col.sum() / n;
                        let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
                        let scale = var.sqrt();
                        if scale <= 1e-12 * mean.abs().max(1.0) {
                            return Err(Error::ZeroVariance(name.clone()));
                        }
                        Ok(ColumnStats { mean, scale })
                    })
                    .collect::<Result<_>>()?
            }
        };
        let mut values = self.values.clone();
        for (j, s) in stats.iter().enumerate() {
            values.column_mut(j).apply(|x| *x = (*x - s.mean) / s.scale);
        }
        Ok(FeatureMatrix { values, stats: Some(stats), ..self.clone() })
    }

    /// Inverse of [`FeatureMatrix::standardize`].
    pub fn destandardize(&self) -> Result<FeatureMatrix> {
        let stats = self
            .stats
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("matrix is not standardized".into()))?;
        let mut values = self.values.clone();
        for (j, s) in stats.iter().enumerate() {
            values.column_mut(j).apply(|x| *x = *x * s.scale + s.mean);
        }
        Ok(FeatureMatrix { values, stats: None, ..self.clone() })
    }

    /// Rows whose date lies in `range`, which must be fully covered.
    pub fn rows_in(&self, range: DateRange) -> Result<FeatureMatrix> {
        let (Some(&first), Some(&last)) = (self.dates.first(), self.dates.last()) else {
            return Err(Error::RangeNotCovered(format!("empty matrix cannot cover {range}")));
        };
        if range.start < first || range.end > last {
            return Err(Error::RangeNotCovered(format!(
                "matrix spans {first}..{last}, requested {range}"
            )));
        }
        let idx: Vec<usize> = (0..self.n_rows()).filter(|&i| range.contains(self.dates[i])).collect();
        Ok(self.select_rows(&idx))
    }

    pub fn select_rows(&self, idx: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            dates: idx.iter().map(|&i| self.dates[i]).collect(),
            columns: self.columns.clone(),
            values: self.values.select_rows(idx),
            target: idx.iter().map(|&i| self.target[i]).collect(),
            stats: self.stats.clone(),
        }
    }
}
