//! Transfusion records, daily aggregates and the model feature set.

mod aggregate;
mod features;
mod ingest;
mod scenario;

use std::fmt;
use std::str::FromStr;

use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use aggregate::{aggregate_daily, write_daily_csv, DailyAggregate};
pub(crate) use features::weekday_index;
pub use features::{build_features, ColumnStats, FeatureMatrix, FEATURE_NAMES, N_FEATURES};
pub use ingest::{
    ingest_granular, parse_received, write_granular_csv, write_received_csv, Ingest, RowError,
    GRANULAR_HEADER,
};
pub use scenario::{split_scenario, ScenarioName, ScenarioSplit};

/// The laboratory tests tracked per transfusion, in feature-table order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Lab {
    Alp,
    Mpv,
    Hematocrit,
    Po2,
    Creatinine,
    Inr,
    Mchb,
    MchbConc,
    Hb,
    Mcv,
    Plt,
    RedCellWidth,
    Wbc,
    Alc,
}

impl Lab {
    pub const COUNT: usize = 14;

    pub const ALL: [Lab; Lab::COUNT] = [
        Lab::Alp,
        Lab::Mpv,
        Lab::Hematocrit,
        Lab::Po2,
        Lab::Creatinine,
        Lab::Inr,
        Lab::Mchb,
        Lab::MchbConc,
        Lab::Hb,
        Lab::Mcv,
        Lab::Plt,
        Lab::RedCellWidth,
        Lab::Wbc,
        Lab::Alc,
    ];

    /// Short name used in granular file headers.
    pub fn name(self) -> &'static str {
        match self {
            Lab::Alp => "ALP",
            Lab::Mpv => "MPV",
            Lab::Hematocrit => "hematocrit",
            Lab::Po2 => "PO2",
            Lab::Creatinine => "creatinine",
            Lab::Inr => "INR",
            Lab::Mchb => "MCHb",
            Lab::MchbConc => "MCHb_conc",
            Lab::Hb => "hb",
            Lab::Mcv => "mcv",
            Lab::Plt => "plt",
            Lab::RedCellWidth => "redcellwidth",
            Lab::Wbc => "wbc",
            Lab::Alc => "ALC",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Daily-aggregate column name, e.g. `abnormal_plt`.
    pub fn column(self) -> String {
        format!("abnormal_{}", self.name())
    }
}

/// Ward where the transfusion took place.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Location {
    GeneralMedicine,
    Hematology,
    IntensiveCare,
    CardiovascularSurgery,
    Pediatric,
    Other,
}

impl Location {
    pub const COUNT: usize = 6;

    pub const ALL: [Location; Location::COUNT] = [
        Location::GeneralMedicine,
        Location::Hematology,
        Location::IntensiveCare,
        Location::CardiovascularSurgery,
        Location::Pediatric,
        Location::Other,
    ];

    /// Locations that appear as feature columns (`Other` does not).
    pub const FEATURED: [Location; 5] = [
        Location::GeneralMedicine,
        Location::Hematology,
        Location::IntensiveCare,
        Location::CardiovascularSurgery,
        Location::Pediatric,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Location::GeneralMedicine => "GeneralMedicine",
            Location::Hematology => "Hematology",
            Location::IntensiveCare => "IntensiveCare",
            Location::CardiovascularSurgery => "CardiovascularSurgery",
            Location::Pediatric => "Pediatric",
            Location::Other => "Other",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn column(self) -> String {
        format!("location_{}", self.name())
    }
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Location {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Location::ALL
            .into_iter()
            .find(|l| l.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidInput(format!("unknown location `{s}`")))
    }
}

/// Result of one lab test for the transfused patient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum LabFlag {
    Normal,
    Abnormal,
    #[default]
    Missing,
}

impl LabFlag {
    /// Parses a granular-file cell. Anything other than `normal`/`abnormal` is missing.
    pub fn parse(cell: &str) -> LabFlag {
        let c = cell.trim();
        if c.eq_ignore_ascii_case("abnormal") {
            LabFlag::Abnormal
        } else if c.eq_ignore_ascii_case("normal") {
            LabFlag::Normal
        } else {
            LabFlag::Missing
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LabFlag::Normal => "normal",
            LabFlag::Abnormal => "abnormal",
            LabFlag::Missing => "",
        }
    }
}

/// One flag per [`Lab`]; the fixed array guarantees all 14 labs are present.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LabFlags(pub [LabFlag; Lab::COUNT]);

impl LabFlags {
    pub fn get(&self, lab: Lab) -> LabFlag {
        self.0[lab.index()]
    }

    pub fn set(&mut self, lab: Lab, flag: LabFlag) {
        self.0[lab.index()] = flag;
    }
}

/// One platelet unit transfused to one patient.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransfusionRecord {
    pub date: NaiveDate,
    pub patient_id: String,
    pub location: Location,
    pub lab_flags: LabFlags,
}

/// Inclusive calendar-date range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self> {
        if end < start {
            return Err(Error::InvalidInput(format!("date range {start}..{end} is reversed")));
        }
        Ok(DateRange { start, end })
    }

    /// Range covering whole calendar years `first..=last`.
    pub fn years(first: i32, last: i32) -> Result<Self> {
        let start = NaiveDate::from_ymd_opt(first, 1, 1)
            .ok_or_else(|| Error::InvalidInput(format!("bad year {first}")))?;
        let end = NaiveDate::from_ymd_opt(last, 12, 31)
            .ok_or_else(|| Error::InvalidInput(format!("bad year {last}")))?;
        DateRange::new(start, end)
    }

    pub fn contains(&self, d: NaiveDate) -> bool {
        self.start <= d && d <= self.end
    }

    pub fn covers(&self, other: &DateRange) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    pub fn len_days(&self) -> usize {
        (self.end - self.start).num_days() as usize + 1
    }

    pub fn iter(&self) -> impl Iterator<Item = NaiveDate> {
        let start = self.start;
        (0..self.len_days() as u64).map(move |i| start + Days::new(i))
    }
}

impl fmt::Display for DateRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.start, self.end)
    }
}

pub(crate) fn parse_date(s: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d")
        .map_err(|e| Error::InvalidInput(format!("invalid date `{s}`: {e}")))
}
