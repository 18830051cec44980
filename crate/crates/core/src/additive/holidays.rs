use std::ops::RangeInclusive;

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Holiday {
    NewYearsDay,
    FamilyDay,
    GoodFriday,
    VictoriaDay,
    CanadaDay,
    CivicHoliday,
    LabourDay,
    Thanksgiving,
    Christmas,
    BoxingDay,
}

impl Holiday {
    pub const ALL: [Holiday; 10] = [
        Holiday::NewYearsDay,
        Holiday::FamilyDay,
        Holiday::GoodFriday,
        Holiday::VictoriaDay,
        Holiday::CanadaDay,
        Holiday::CivicHoliday,
        Holiday::LabourDay,
        Holiday::Thanksgiving,
        Holiday::Christmas,
        Holiday::BoxingDay,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Holiday::NewYearsDay => "NewYearsDay",
            Holiday::FamilyDay => "FamilyDay",
            Holiday::GoodFriday => "GoodFriday",
            Holiday::VictoriaDay => "VictoriaDay",
            Holiday::CanadaDay => "CanadaDay",
            Holiday::CivicHoliday => "CivicHoliday",
            Holiday::LabourDay => "LabourDay",
            Holiday::Thanksgiving => "Thanksgiving",
            Holiday::Christmas => "Christmas",
            Holiday::BoxingDay => "BoxingDay",
        }
    }

    /// Statutory date in `year`; weekend dates are not shifted.
    pub fn date(self, year: i32) -> NaiveDate {
        let ymd = |m, d| NaiveDate::from_ymd_opt(year, m, d).expect("valid fixed date");
        let nth = |m, wd, n| {
            NaiveDate::from_weekday_of_month_opt(year, m, wd, n).expect("valid weekday of month")
        };
        match self {
            Holiday::NewYearsDay => ymd(1, 1),
            Holiday::FamilyDay => nth(2, Weekday::Mon, 3),
            Holiday::GoodFriday => easter(year) - Duration::days(2),
            Holiday::VictoriaDay => {
                let may25 = ymd(5, 25);
                let back = match may25.weekday().num_days_from_monday() {
                    0 => 7,
                    k => k as i64,
                };
                may25 - Duration::days(back)
            }
            Holiday::CanadaDay => ymd(7, 1),
            Holiday::CivicHoliday => nth(8, Weekday::Mon, 1),
            Holiday::LabourDay => nth(9, Weekday::Mon, 1),
            Holiday::Thanksgiving => nth(10, Weekday::Mon, 2),
            Holiday::Christmas => ymd(12, 25),
            Holiday::BoxingDay => ymd(12, 26),
        }
    }
}

impl std::fmt::Display for Holiday {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Easter Sunday by the anonymous Gregorian algorithm.
pub fn easter(year: i32) -> NaiveDate {
    let a = year % 19;
    let b = year / 100;
    let c = year % 100;
    let d = b / 4;
    let e = b % 4;
    let f = (b + 8) / 25;
    let g = (b - f + 1) / 3;
    let h = (19 * a + b - d - g + 15) % 30;
    let i = c / 4;
    let k = c % 4;
    let l = (32 + 2 * e + 2 * i - h - k) % 7;
    let m = (a + 11 * h + 22 * l) / 451;
    let month = (h + l - 7 * m + 114) / 31;
    let day = (h + l - 7 * m + 114) % 31 + 1;
    NaiveDate::from_ymd_opt(year, month as u32, day as u32).expect("computus yields a valid date")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HolidayCalendar {
    /// Sorted by date.
    pub entries: Vec<(NaiveDate, Holiday)>,
}

impl HolidayCalendar {
    /// Holidays whose `window`-day neighbourhood contains `date`.
    pub fn active_on(&self, date: NaiveDate, window: i64) -> impl Iterator<Item = Holiday> + '_ {
        self.entries
            .iter()
            .filter(move |(d, _)| (date - *d).num_days().abs() <= window)
            .map(|(_, h)| *h)
    }

    pub fn years(&self) -> Vec<i32> {
        let mut y: Vec<i32> = self.entries.iter().map(|(d, _)| d.year()).collect();
        y.dedup();
        y
    }
}

pub fn make_holiday_calendar(years: RangeInclusive<i32>) -> HolidayCalendar {
    let mut entries: Vec<(NaiveDate, Holiday)> = years
        .flat_map(|y| Holiday::ALL.iter().map(move |h| (h.date(y), *h)))
        .collect();
    entries.sort();
    HolidayCalendar { entries }
}
