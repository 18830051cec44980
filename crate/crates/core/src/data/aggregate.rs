use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{DateRange, Lab, LabFlag, Location, TransfusionRecord};
use crate::error::{Error, Result};

/// Per-day totals. Patient-based counts use distinct `patient_id`s.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DailyAggregate {
    pub date: NaiveDate,
    pub units_transfused: u32,
    pub units_received: u32,
    /// Distinct patients transfused that day.
    pub patients: u32,
    /// Distinct patients with at least one abnormal result, indexed by [`Lab::index`].
    pub abnormal_counts: [u32; Lab::COUNT],
    /// Distinct patients per ward, indexed by [`Location::index`].
    pub location_counts: [u32; Location::COUNT],
}

impl DailyAggregate {
    pub fn empty(date: NaiveDate, units_received: u32) -> Self {
        DailyAggregate {
            date,
            units_transfused: 0,
            units_received,
            patients: 0,
            abnormal_counts: [0; Lab::COUNT],
            location_counts: [0; Location::COUNT],
        }
    }

    pub fn abnormal(&self, lab: Lab) -> u32 {
        self.abnormal_counts[lab.index()]
    }

    pub fn at_location(&self, loc: Location) -> u32 {
        self.location_counts[loc.index()]
    }
}

#[derive(Default)]
struct PatientDay {
    abnormal: [bool; Lab::COUNT],
    locations: [bool; Location::COUNT],
}

/// Collapses granular records into one row per day of `range`.
///
/// Days without transfusions still get a (zero) row. Every day in `range`
/// must have a received-units entry, and every record must fall in `range`.
pub fn aggregate_daily(
    records: &[TransfusionRecord],
    received: &BTreeMap<NaiveDate, u32>,
    range: DateRange,
) -> Result<Vec<DailyAggregate>> {
    let mut by_day: HashMap<NaiveDate, (u32, HashMap<&str, PatientDay>)> = HashMap::new();
    for r in records {
        if !range.contains(r.date) {
            return Err(Error::RangeNotCovered(format!(
                "record dated {} outside aggregation range {range}",
                r.date
            )));
        }
        let (units, patients) = by_day.entry(r.date).or_default();
        *units += 1;
        let p = patients.entry(r.patient_id.as_str()).or_default();
        p.locations[r.location.index()] = true;
        for lab in Lab::ALL {
            if r.lab_flags.get(lab) == LabFlag::Abnormal {
                p.abnormal[lab.index()] = true;
            }
        }
    }

    range
        .iter()
        .map(|date| {
            let units_received = *received.get(&date).ok_or_else(|| {
                Error::InsufficientData(format!("received-units series has no entry for {date}"))
            })?;
            let mut day = DailyAggregate::empty(date, units_received);
            if let Some((units, patients)) = by_day.get(&date) {
                day.units_transfused = *units;
                day.patients = patients.len() as u32;
                for p in patients.values() {
                    for (count, &flag) in day.abnormal_counts.iter_mut().zip(&p.abnormal) {
                        *count += flag as u32;
                    }
                    for (count, &flag) in day.location_counts.iter_mut().zip(&p.locations) {
                        *count += flag as u32;
                    }
                }
            }
            Ok(day)
        })
        .collect()
}

/// Writes daily rows with the feature-table column names, for diffing against other tools.
pub fn write_daily_csv<W: Write>(days: &[DailyAggregate], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    let mut header = vec!["date".to_string()];
    header.extend(Lab::ALL.iter().map(|l| l.column()));
    header.extend(Location::FEATURED.iter().map(|l| l.column()));
    header.push("units_transfused".into());
    header.push("units_received".into());
    w.write_record(&header)?;
    for d in days {
        let mut row = vec![d.date.to_string()];
        row.extend(Lab::ALL.iter().map(|&l| d.abnormal(l).to_string()));
        row.extend(Location::FEATURED.iter().map(|&l| d.at_location(l).to_string()));
        row.push(d.units_transfused.to_string());
        row.push(d.units_received.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
