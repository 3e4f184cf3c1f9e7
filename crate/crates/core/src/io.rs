//! CSV ingestion and export for raw cohorts and cleaned modelling tables.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{parse_yes_no, FeatureSet, RawRecord};
use crate::preprocess::{CleanDataset, CleanRecord};

/// Raw CSV header, in output order. Matching on input is case-insensitive.
pub const RAW_HEADERS: [&str; 19] = [
    "id",
    "age",
    "sex",
    "weight_kg",
    "height_m",
    "bsa",
    "bmi",
    "amiodarone",
    "vkorc1",
    "cyp2c9",
    "dose1",
    "dose2",
    "dose3",
    "inr_base",
    "inr_d4",
    "inr_d5",
    "inr_d6",
    "inr_d7",
    "inr_d8",
];

fn cell(row: &csv::StringRecord, idx: usize) -> Option<&str> {
    row.get(idx).map(str::trim).filter(|s| !s.is_empty())
}

fn num(field: &'static str, s: Option<&str>) -> Result<Option<f64>> {
    s.map(|v| {
        v.parse::<f64>().map_err(|_| Error::Parse {
            field,
            value: v.to_string(),
        })
    })
    .transpose()
}

fn parsed<T: std::str::FromStr<Err = Error>>(s: Option<&str>) -> Result<Option<T>> {
    s.map(str::parse).transpose()
}

/// Reads raw records following the cohort CSV contract. Empty cells are
/// missing; every record is validated.
pub fn read_raw_csv<R: Read>(reader: R) -> Result<Vec<RawRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut index = [0usize; 19];
    for (slot, name) in index.iter_mut().zip(RAW_HEADERS) {
        *slot = headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::Parse {
                field: "header",
                value: format!("missing column {name}"),
            })?;
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let c = |i: usize| cell(&row, index[i]);
        let rec = RawRecord {
            patient_id: c(0).unwrap_or_default().to_string(),
            age: num("age", c(1))?,
            gender: parsed(c(2))?,
            weight: num("weight_kg", c(3))?,
            height: num("height_m", c(4))?,
            bsa: num("bsa", c(5))?,
            bmi: num("bmi", c(6))?,
            amiodarone: c(7).map(|v| parse_yes_no("amiodarone", v)).transpose()?,
            vkorc1: parsed(c(8))?,
            cyp2c9: parsed(c(9))?,
            dose_day1: num("dose1", c(10))?,
            dose_day2: num("dose2", c(11))?,
            dose_day3: num("dose3", c(12))?,
            inr_baseline: num("inr_base", c(13))?,
            inr_day4: num("inr_d4", c(14))?,
            inr_day5: num("inr_d5", c(15))?,
            inr_day6: num("inr_d6", c(16))?,
            inr_day7: num("inr_d7", c(17))?,
            inr_day8: num("inr_d8", c(18))?,
        };
        rec.validate()?;
        out.push(rec);
    }
    Ok(out)
}

pub fn read_raw_csv_file(path: impl AsRef<Path>) -> Result<Vec<RawRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_raw_csv(file).map_err(|e| e.context(path.display().to_string()))
}

fn fmt_num(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_raw_csv<W: Write>(records: &[RawRecord], writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(RAW_HEADERS)?;
    for r in records {
        wtr.write_record([
            r.patient_id.clone(),
            fmt_num(r.age),
            r.gender.map(|g| g.as_str().to_string()).unwrap_or_default(),
            fmt_num(r.weight),
            fmt_num(r.height),
            fmt_num(r.bsa),
            fmt_num(r.bmi),
            r.amiodarone
                .map(|a| if a { "1" } else { "0" }.to_string())
                .unwrap_or_default(),
            r.vkorc1.map(|h| h.as_str().to_string()).unwrap_or_default(),
            r.cyp2c9.map(|g| g.as_str().to_string()).unwrap_or_default(),
            fmt_num(r.dose_day1),
            fmt_num(r.dose_day2),
            fmt_num(r.dose_day3),
            fmt_num(r.inr_baseline),
            fmt_num(r.inr_day4),
            fmt_num(r.inr_day5),
            fmt_num(r.inr_day6),
            fmt_num(r.inr_day7),
            fmt_num(r.inr_day8),
        ])?;
    }
    wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

/// Writes a cohort file; I/O failures carry the path.
pub fn write_cohort(records: &[RawRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_raw_csv(records, file).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other.context(path.display().to_string()),
    })
}

/// Clean table: the feature columns followed by `label`.
pub fn write_clean_csv<W: Write>(data: &CleanDataset, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = data.column_names.clone();
    header.push("label".to_string());
    wtr.write_record(&header)?;
    for r in &data.records {
        let mut row: Vec<String> = r.features.iter().map(f64::to_string).collect();
        row.push(r.label.to_string());
        wtr.write_record(&row)?;
    }
    wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

/// Reads a clean table; the feature set is recognised from the header and
/// the class count is at least 3, or the largest label present.
pub fn read_clean_csv<R: Read>(reader: R) -> Result<CleanDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let (label, columns) = headers.split_last().ok_or(Error::EmptyDataset)?;
    if !label.eq_ignore_ascii_case("label") {
        return Err(Error::Parse {
            field: "header",
            value: format!("last column must be label, found {label}"),
        });
    }
    let feature_set = FeatureSet::from_column_names(columns).ok_or_else(|| Error::Parse {
        field: "header",
        value: columns.join(","),
    })?;
    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let mut features = Vec::with_capacity(columns.len());
        for v in row.iter().take(columns.len()) {
            features.push(v.parse::<f64>().map_err(|_| Error::Parse {
                field: "feature",
                value: v.to_string(),
            })?);
        }
        let raw_label = row.get(columns.len()).unwrap_or_default();
        let label: u8 = raw_label.parse().map_err(|_| Error::Parse {
            field: "label",
            value: raw_label.to_string(),
        })?;
        records.push(CleanRecord { features, label });
    }
    let num_classes = records.iter().map(|r| r.label).max().unwrap_or(3).max(3);
    CleanDataset::with_classes(feature_set, records, num_classes)
}

pub fn read_clean_csv_file(path: impl AsRef<Path>) -> Result<CleanDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_clean_csv(file).map_err(|e| e.context(path.display().to_string()))
}
