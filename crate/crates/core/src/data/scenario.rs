use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{DateRange, FeatureMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioName {
    TwoYear,
    EightYear,
    Custom,
}

impl ScenarioName {
    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioName::TwoYear => "two_year",
            ScenarioName::EightYear => "eight_year",
            ScenarioName::Custom => "custom",
        }
    }
}

impl fmt::Display for ScenarioName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "two_year" | "twoyear" | "2y" => Ok(ScenarioName::TwoYear),
            "eight_year" | "eightyear" | "8y" => Ok(ScenarioName::EightYear),
            "custom" => Ok(ScenarioName::Custom),
            other => Err(Error::InvalidInput(format!("unknown scenario `{other}`"))),
        }
    }
}

/// Train/test date ranges. The test range starts the day after training ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioSplit {
    pub name: ScenarioName,
    pub train: DateRange,
    pub test: DateRange,
}

fn ymd(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).expect("valid literal date")
}

impl ScenarioSplit {
    /// Train 2016-2017, test 2018.
    pub fn two_year() -> Self {
        ScenarioSplit {
            name: ScenarioName::TwoYear,
            train: DateRange { start: ymd(2016, 1, 1), end: ymd(2017, 12, 31) },
            test: DateRange { start: ymd(2018, 1, 1), end: ymd(2018, 12, 31) },
        }
    }

    /// Train 2010-2017, test 2018.
    pub fn eight_year() -> Self {
        ScenarioSplit {
            name: ScenarioName::EightYear,
            train: DateRange { start: ymd(2010, 1, 1), end: ymd(2017, 12, 31) },
            test: DateRange { start: ymd(2018, 1, 1), end: ymd(2018, 12, 31) },
        }
    }

    pub fn custom(train: DateRange, test: DateRange) -> Result<Self> {
        if train.end.succ_opt() != Some(test.start) {
            return Err(Error::InvalidInput(format!(
                "test range {test} must start the day after training range {train} ends"
            )));
        }
        Ok(ScenarioSplit { name: ScenarioName::Custom, train, test })
    }

    pub fn named(name: ScenarioName) -> Result<Self> {
        match name {
            ScenarioName::TwoYear => Ok(Self::two_year()),
            ScenarioName::EightYear => Ok(Self::eight_year()),
            ScenarioName::Custom => {
                Err(Error::InvalidInput("custom scenarios need explicit ranges".into()))
            }
        }
    }

    /// Whole span from training start to test end.
    pub fn span(&self) -> DateRange {
        DateRange { start: self.train.start, end: self.test.end }
    }
}

/// Partitions raw feature rows by date. The training part is standardized on
/// its own statistics and the test part with the training statistics.
pub fn split_scenario(
    m: &FeatureMatrix,
    split: &ScenarioSplit,
) -> Result<(FeatureMatrix, FeatureMatrix)> {
    let train = m.rows_in(split.train)?.standardize(None)?;
    let stats = train.stats.clone().expect("standardize records stats");
    let test = m.rows_in(split.test)?.standardize(Some(&stats))?;
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_features, DailyAggregate, Lab, Location};
    use chrono::Days;

    fn synthetic_daily(range: DateRange) -> Vec<DailyAggregate> {
        range
            .iter()
            .enumerate()
            .map(|(i, date)| {
                let mut d = DailyAggregate::empty(date, (i % 11) as u32 + 5);
                d.units_transfused = (i % 13) as u32 + 3;
                d.patients = d.units_transfused;
                for lab in Lab::ALL {
                    d.abnormal_counts[lab.index()] = ((i + lab.index()) % 3) as u32;
                }
                for loc in Location::ALL {
                    d.location_counts[loc.index()] = ((i + loc.index()) % 4) as u32;
                }
                d
            })
            .collect()
    }

    fn matrix_from(start: NaiveDate, end: NaiveDate) -> FeatureMatrix {
        // Seven lead-in days so the first emitted row is `start`.
        let lead = start - Days::new(7);
        build_features(&synthetic_daily(DateRange::new(lead, end).unwrap())).unwrap()
    }

    #[test]
    fn two_year_split_boundaries() {
        let m = matrix_from(ymd(2016, 1, 1), ymd(2018, 12, 31));
        let (train, test) = split_scenario(&m, &ScenarioSplit::two_year()).unwrap();
        assert_eq!(*train.dates.last().unwrap(), ymd(2017, 12, 31));
        assert_eq!(test.dates[0], ymd(2018, 1, 1));
        assert_eq!(train.n_rows(), 731);
        assert_eq!(test.n_rows(), 365);
        assert_eq!(train.stats, test.stats);

        let mut joined = train.dates.clone();
        joined.extend(&test.dates);
        assert_eq!(joined, m.dates);
    }

    #[test]
    fn eight_year_needs_coverage() {
        let m = matrix_from(ymd(2012, 1, 1), ymd(2018, 12, 31));
        assert!(matches!(
            split_scenario(&m, &ScenarioSplit::eight_year()),
            Err(Error::RangeNotCovered(_))
        ));
    }

    #[test]
    fn custom_requires_adjacent_ranges() {
        let train = DateRange::new(ymd(2017, 1, 1), ymd(2017, 6, 30)).unwrap();
        let ok = DateRange::new(ymd(2017, 7, 1), ymd(2017, 12, 31)).unwrap();
        let gap = DateRange::new(ymd(2017, 7, 2), ymd(2017, 12, 31)).unwrap();
        assert!(ScenarioSplit::custom(train, ok).is_ok());
        assert!(ScenarioSplit::custom(train, gap).is_err());
    }

    #[test]
    fn scenario_names_parse() {
        assert_eq!("two-year".parse::<ScenarioName>().unwrap(), ScenarioName::TwoYear);
        assert_eq!("8y".parse::<ScenarioName>().unwrap(), ScenarioName::EightYear);
    }
}
