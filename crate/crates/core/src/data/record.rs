//! Patient records and the CSV cohort layout.
//!
//! A cohort directory holds five UTF-8 CSV files with header rows:
//!
//! | file       | columns                              |
//! |------------|--------------------------------------|
//! | `labs.csv` | `patient_id,month,lab_code,value`    |
//! | `dx.csv`   | `patient_id,month,icd9`              |
//! | `rx.csv`   | `patient_id,month,drug_class`        |
//! | `px.csv`   | `patient_id,month,cpt`               |
//! | `demo.csv` | `patient_id,gender,birth_year`       |
//!
//! Months are absolute non-negative integer indices. `labs.csv` is
//! required; the other files are optional on read and always written.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type PatientId = u64;

/// Everything known about one person. Lab series are sorted by month with
/// at most one value per month.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PatientRecord {
    pub patient_id: PatientId,
    pub gender: Option<String>,
    pub birth_year: Option<i32>,
    pub labs: BTreeMap<String, Vec<(u32, f64)>>,
    pub diagnoses: Vec<(u32, String)>,
    pub prescriptions: Vec<(u32, String)>,
    pub procedures: Vec<(u32, String)>,
}

impl PatientRecord {
    pub fn new(patient_id: PatientId) -> Self {
        Self {
            patient_id,
            ..Self::default()
        }
    }

    /// Adds a lab value; values sharing a (lab, month) are averaged by
    /// canonicalization.
    /// Call [`canonicalize`](Self::canonicalize) once all values are in.
    pub fn add_lab(&mut self, code: &str, month: u32, value: f64) {
        self.labs
            .entry(code.to_string())
            .or_default()
            .push((month, value));
    }

    /// Sorts events and averages duplicate (lab, month) values.
    pub fn canonicalize(&mut self) {
        for series in self.labs.values_mut() {
            series.sort_by(|a, b| a.0.cmp(&b.0));
            let mut merged: Vec<(u32, f64)> = Vec::with_capacity(series.len());
            let mut i = 0;
            while i < series.len() {
                let month = series[i].0;
                let mut j = i;
                let mut sum = 0.0;
                while j < series.len() && series[j].0 == month {
                    sum += series[j].1;
                    j += 1;
                }
                merged.push((month, sum / (j - i) as f64));
                i = j;
            }
            *series = merged;
        }
        self.labs.retain(|_, s| !s.is_empty());
        for events in [
            &mut self.diagnoses,
            &mut self.prescriptions,
            &mut self.procedures,
        ] {
            events.sort();
        }
    }

    /// First and last month with any lab value.
    pub fn lab_span(&self) -> Option<(u32, u32)> {
        let first = self
            .labs
            .values()
            .filter_map(|s| s.first())
            .map(|e| e.0)
            .min()?;
        let last = self
            .labs
            .values()
            .filter_map(|s| s.last())
            .map(|e| e.0)
            .max()?;
        Some((first, last))
    }

    pub fn lab_months(&self) -> Vec<u32> {
        let mut months: Vec<u32> = self
            .labs
            .values()
            .flat_map(|s| s.iter().map(|e| e.0))
            .collect();
        months.sort_unstable();
        months.dedup();
        months
    }

    /// Moves every event `k` months later.
    pub fn shifted(&self, k: u32) -> Self {
        let mut out = self.clone();
        for s in out.labs.values_mut() {
            for e in s.iter_mut() {
                e.0 += k;
            }
        }
        for events in [
            &mut out.diagnoses,
            &mut out.prescriptions,
            &mut out.procedures,
        ] {
            for e in events.iter_mut() {
                e.0 += k;
            }
        }
        out
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct LabRow {
    patient_id: PatientId,
    month: u32,
    lab_code: String,
    value: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct DxRow {
    patient_id: PatientId,
    month: u32,
    icd9: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct RxRow {
    patient_id: PatientId,
    month: u32,
    drug_class: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct PxRow {
    patient_id: PatientId,
    month: u32,
    cpt: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct DemoRow {
    patient_id: PatientId,
    gender: Option<String>,
    birth_year: Option<i32>,
}

pub const LABS_FILE: &str = "labs.csv";
pub const DX_FILE: &str = "dx.csv";
pub const RX_FILE: &str = "rx.csv";
pub const PX_FILE: &str = "px.csv";
pub const DEMO_FILE: &str = "demo.csv";

fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let mut rows = Vec::new();
    for row in reader.deserialize() {
        rows.push(row.map_err(|e| csv_error(path, e))?);
    }
    Ok(rows)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        kind => Error::Malformed {
            path: path.to_path_buf(),
            line,
            message: describe(kind),
        },
    }
}

fn describe(kind: csv::ErrorKind) -> String {
    match kind {
        csv::ErrorKind::Deserialize { err, .. } => err.to_string(),
        csv::ErrorKind::UnequalLengths {
            expected_len, len, ..
        } => {
            format!("expected {expected_len} fields, found {len}")
        }
        csv::ErrorKind::Utf8 { err, .. } => err.to_string(),
        other => format!("{other:?}"),
    }
}

/// Reads a cohort directory. Records come back sorted by patient id.
pub fn read_cohort(dir: &Path) -> Result<Vec<PatientRecord>> {
    let mut by_id: BTreeMap<PatientId, PatientRecord> = BTreeMap::new();
    let labs_path = dir.join(LABS_FILE);
    let labs: Vec<LabRow> = read_rows(&labs_path)?;
    for (i, r) in labs.into_iter().enumerate() {
        if !r.value.is_finite() {
            return Err(Error::Malformed {
                path: labs_path.clone(),
                line: i as u64 + 2,
                message: format!("non-finite lab value {}", r.value),
            });
        }
        by_id
            .entry(r.patient_id)
            .or_insert_with(|| PatientRecord::new(r.patient_id))
            .add_lab(&r.lab_code, r.month, r.value);
    }
    let optional = |name: &str| -> Option<PathBuf> {
        let p = dir.join(name);
        p.exists().then_some(p)
    };
    if let Some(p) = optional(DX_FILE) {
        for r in read_rows::<DxRow>(&p)? {
            by_id
                .entry(r.patient_id)
                .or_insert_with(|| PatientRecord::new(r.patient_id))
                .diagnoses
                .push((r.month, r.icd9));
        }
    }
    if let Some(p) = optional(RX_FILE) {
        for r in read_rows::<RxRow>(&p)? {
            by_id
                .entry(r.patient_id)
                .or_insert_with(|| PatientRecord::new(r.patient_id))
                .prescriptions
                .push((r.month, r.drug_class));
        }
    }
    if let Some(p) = optional(PX_FILE) {
        for r in read_rows::<PxRow>(&p)? {
            by_id
                .entry(r.patient_id)
                .or_insert_with(|| PatientRecord::new(r.patient_id))
                .procedures
                .push((r.month, r.cpt));
        }
    }
    if let Some(p) = optional(DEMO_FILE) {
        for r in read_rows::<DemoRow>(&p)? {
            let rec = by_id
                .entry(r.patient_id)
                .or_insert_with(|| PatientRecord::new(r.patient_id));
            rec.gender = r.gender.filter(|g| !g.is_empty());
            rec.birth_year = r.birth_year;
        }
    }
    let mut out: Vec<PatientRecord> = by_id.into_values().collect();
    for r in &mut out {
        r.canonicalize();
    }
    Ok(out)
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn write_all<T: Serialize>(
    path: &Path,
    header: &[&str],
    rows: impl Iterator<Item = T>,
) -> Result<()> {
    let mut w = writer(path)?;
    // headers are written explicitly so empty files still carry them
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    let mut w = {
        let inner = w
            .into_inner()
            .map_err(|e| Error::io(path, e.into_error()))?;
        csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(inner)
    };
    for row in rows {
        w.serialize(row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes the five cohort files, sorted by patient then month. Lab values
/// use Rust's shortest round-trip formatting so a reread is exact.
pub fn write_cohort(dir: &Path, records: &[PatientRecord]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut sorted: Vec<&PatientRecord> = records.iter().collect();
    sorted.sort_by_key(|r| r.patient_id);

    let mut labs = Vec::new();
    for r in &sorted {
        let mut rows: Vec<(u32, &str, f64)> = r
            .labs
            .iter()
            .flat_map(|(code, s)| s.iter().map(move |&(m, v)| (m, code.as_str(), v)))
            .collect();
        rows.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(b.1)));
        labs.extend(rows.into_iter().map(|(month, code, value)| LabRow {
            patient_id: r.patient_id,
            month,
            lab_code: code.to_string(),
            value,
        }));
    }
    write_all(
        &dir.join(LABS_FILE),
        &["patient_id", "month", "lab_code", "value"],
        labs.into_iter(),
    )?;

    let events = |pick: fn(&PatientRecord) -> &Vec<(u32, String)>| {
        sorted
            .iter()
            .flat_map(move |r| {
                let mut ev = pick(r).clone();
                ev.sort();
                ev.into_iter().map(move |(m, c)| (r.patient_id, m, c))
            })
            .collect::<Vec<_>>()
    };
    write_all(
        &dir.join(DX_FILE),
        &["patient_id", "month", "icd9"],
        events(|r| &r.diagnoses)
            .into_iter()
            .map(|(patient_id, month, icd9)| DxRow {
                patient_id,
                month,
                icd9,
            }),
    )?;
    write_all(
        &dir.join(RX_FILE),
        &["patient_id", "month", "drug_class"],
        events(|r| &r.prescriptions)
            .into_iter()
            .map(|(patient_id, month, drug_class)| RxRow {
                patient_id,
                month,
                drug_class,
            }),
    )?;
    write_all(
        &dir.join(PX_FILE),
        &["patient_id", "month", "cpt"],
        events(|r| &r.procedures)
            .into_iter()
            .map(|(patient_id, month, cpt)| PxRow {
                patient_id,
                month,
                cpt,
            }),
    )?;
    write_all(
        &dir.join(DEMO_FILE),
        &["patient_id", "gender", "birth_year"],
        sorted.iter().map(|r| DemoRow {
            patient_id: r.patient_id,
            gender: r.gender.clone(),
            birth_year: r.birth_year,
        }),
    )
}
