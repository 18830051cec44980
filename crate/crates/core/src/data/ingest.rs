use std::collections::BTreeMap;
use std::io::{Read, Write};

use chrono::NaiveDate;

use super::{parse_date, Lab, LabFlag, LabFlags, Location, TransfusionRecord};
use crate::error::{Error, Result};

/// Column order written by [`write_granular_csv`].
pub const GRANULAR_HEADER: [&str; 17] = [
    "date",
    "patient_id",
    "location",
    "ALP",
    "MPV",
    "hematocrit",
    "PO2",
    "creatinine",
    "INR",
    "MCHb",
    "MCHb_conc",
    "hb",
    "mcv",
    "plt",
    "redcellwidth",
    "wbc",
    "ALC",
];

/// A row that failed to parse.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowError {
    /// 1-based line number in the source (the header is line 1).
    pub line: usize,
    pub message: String,
}

impl From<RowError> for Error {
    fn from(e: RowError) -> Self {
        Error::Row { line: e.line, message: e.message }
    }
}

/// Parsed granular file: good rows plus per-row failures.
#[derive(Debug, Clone, Default)]
pub struct Ingest {
    pub records: Vec<TransfusionRecord>,
    pub errors: Vec<RowError>,
}

impl Ingest {
    /// Fails on the first row error, otherwise returns the records.
    pub fn into_strict(self) -> Result<Vec<TransfusionRecord>> {
        match self.errors.into_iter().next() {
            Some(e) => Err(e.into()),
            None => Ok(self.records),
        }
    }
}

/// Reads a comma-separated granular transfusion file.
///
/// Columns are matched by header name, so extra columns and any ordering are
/// accepted. A missing required column is fatal; a malformed date or unknown
/// location is reported per row and the row is skipped. Lab cells other than
/// `normal`/`abnormal` become [`LabFlag::Missing`].
pub fn ingest_granular<R: Read>(source: R) -> Result<Ingest> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let date_col = col("date")?;
    let patient_col = col("patient_id")?;
    let location_col = col("location")?;
    let mut lab_cols = [0usize; Lab::COUNT];
    for lab in Lab::ALL {
        lab_cols[lab.index()] = col(lab.name())?;
    }

    let mut out = Ingest::default();
    for (i, row) in rdr.records().enumerate() {
        let line = i + 2;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                out.errors.push(RowError { line, message: e.to_string() });
                continue;
            }
        };
        let cell = |c: usize| row.get(c).unwrap_or("");
        let date = match parse_date(cell(date_col)) {
            Ok(d) => d,
            Err(e) => {
                out.errors.push(RowError { line, message: e.to_string() });
                continue;
            }
        };
        let location = match cell(location_col).parse::<Location>() {
            Ok(l) => l,
            Err(e) => {
                out.errors.push(RowError { line, message: e.to_string() });
                continue;
            }
        };
        let mut lab_flags = LabFlags::default();
        for lab in Lab::ALL {
            lab_flags.set(lab, LabFlag::parse(cell(lab_cols[lab.index()])));
        }
        out.records.push(TransfusionRecord {
            date,
            patient_id: cell(patient_col).to_string(),
            location,
            lab_flags,
        });
    }
    Ok(out)
}

/// Reads a two-column `date,count` received-units file.
pub fn parse_received<R: Read>(source: R) -> Result<BTreeMap<NaiveDate, u32>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
    let headers = rdr.headers()?.clone();
    let date_col = headers
        .iter()
        .position(|h| h == "date")
        .ok_or_else(|| Error::MissingColumn("date".into()))?;
    let count_col = headers
        .iter()
        .position(|h| h == "count" || h == "units_received")
        .ok_or_else(|| Error::MissingColumn("count".into()))?;
    let mut out = BTreeMap::new();
    for (i, row) in rdr.records().enumerate() {
        let line = i + 2;
        let row = row?;
        let date = parse_date(row.get(date_col).unwrap_or("")).map_err(|e| Error::Row {
            line,
            message: e.to_string(),
        })?;
        let raw = row.get(count_col).unwrap_or("");
        let count: u32 = raw.parse().map_err(|_| Error::Row {
            line,
            message: format!("invalid count `{raw}`"),
        })?;
        if out.insert(date, count).is_some() {
            return Err(Error::Row { line, message: format!("duplicate date {date}") });
        }
    }
    Ok(out)
}

pub fn write_granular_csv<W: Write>(records: &[TransfusionRecord], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(GRANULAR_HEADER)?;
    let mut row: Vec<String> = Vec::with_capacity(GRANULAR_HEADER.len());
    for r in records {
        row.clear();
        row.push(r.date.to_string());
        row.push(r.patient_id.clone());
        row.push(r.location.name().to_string());
        row.extend(Lab::ALL.iter().map(|&l| r.lab_flags.get(l).as_str().to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_received_csv<W: Write>(received: &BTreeMap<NaiveDate, u32>, sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["date", "count"])?;
    for (d, c) in received {
        w.write_record([d.to_string(), c.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
