//! Delimited-text ingestion of longitudinal measurements and export of
//! power-curve plot data.
//!
//! Input files are comma-separated with a header naming the columns
//! `cohort`, `subject`, `time` (hours) and `value`, in any order. Extra
//! columns are ignored.

use std::collections::{HashMap, HashSet};
use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::simulate::NamedCurve;
use crate::trig::{CohortData, SubjectSeries};

const COLUMNS: [&str; 4] = ["cohort", "subject", "time", "value"];

/// Number of points on the exported threshold grid `{0, 0.001, …, 1}`.
pub const CURVE_GRID_POINTS: usize = 1001;

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse {
            line,
            message: format!("{other:?}"),
        },
    }
}

/// Times, values and the set of seen time bit patterns of one subject.
type SubjectRows = (Vec<f64>, Vec<f64>, HashSet<u64>);

#[derive(Default)]
struct CohortRows {
    order: Vec<String>,
    subjects: HashMap<String, SubjectRows>,
}

/// Reads cohorts from a file, see [`read_cohorts`].
pub fn load_cohorts(path: impl AsRef<Path>) -> Result<Vec<CohortData>> {
    read_cohorts(File::open(path)?)
}

/// Groups rows by `(cohort, subject)`. Cohorts and subjects keep their order
/// of first appearance and rows keep file order within a subject.
pub fn read_cohorts(reader: impl Read) -> Result<Vec<CohortData>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    if headers.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut index = [0usize; 4];
    for (slot, name) in index.iter_mut().zip(COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::Parse {
                line: 1,
                message: format!("missing column `{name}`"),
            })?;
    }

    let mut cohort_order: Vec<String> = Vec::new();
    let mut cohorts: HashMap<String, CohortRows> = HashMap::new();
    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| record.get(index[i]).unwrap_or("");
        let number = |i: usize| -> Result<f64> {
            let text = field(i);
            text.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::Parse {
                    line,
                    message: format!("{} `{text}` is not a finite number", COLUMNS[i]),
                })
        };
        let (cohort, subject) = (field(0), field(1));
        if cohort.is_empty() || subject.is_empty() {
            return Err(Error::Parse {
                line,
                message: "empty cohort or subject identifier".into(),
            });
        }
        let time = number(2)?;
        let value = number(3)?;

        let rows = cohorts.entry(cohort.to_string()).or_insert_with(|| {
            cohort_order.push(cohort.to_string());
            CohortRows::default()
        });
        let entry = rows.subjects.entry(subject.to_string()).or_insert_with(|| {
            rows.order.push(subject.to_string());
            Default::default()
        });
        // -0.0 and 0.0 are the same sampling time
        if !entry.2.insert((time + 0.0).to_bits()) {
            return Err(Error::Parse {
                line,
                message: format!(
                    "duplicate time {time} for subject `{subject}` in cohort `{cohort}`"
                ),
            });
        }
        entry.0.push(time);
        entry.1.push(value);
    }
    if cohort_order.is_empty() {
        return Err(Error::EmptyInput);
    }

    cohort_order
        .into_iter()
        .map(|name| {
            let mut rows = cohorts.remove(&name).expect("cohort recorded");
            let subjects = rows
                .order
                .iter()
                .map(|id| {
                    let (times, values, _) = rows.subjects.remove(id).expect("subject recorded");
                    SubjectSeries::new(id.clone(), times, values)
                })
                .collect::<Result<Vec<_>>>()?;
            CohortData::new(name, subjects)
        })
        .collect()
}

/// Writes cohorts in the ingestion format. Floats use the shortest text that
/// parses back to the same value, so a round trip is exact.
pub fn write_cohorts(cohorts: &[&CohortData], writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(COLUMNS).map_err(csv_error)?;
    for cohort in cohorts {
        for s in &cohort.subjects {
            for (t, y) in s.times.iter().zip(&s.values) {
                w.write_record([
                    cohort.cohort_id.as_str(),
                    s.subject_id.as_str(),
                    &t.to_string(),
                    &y.to_string(),
                ])
                .map_err(csv_error)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn save_cohorts(cohorts: &[&CohortData], path: impl AsRef<Path>) -> Result<()> {
    write_cohorts(cohorts, BufWriter::new(File::create(path)?))
}

/// Lower-case hex SHA-256 of a byte slice.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// The `k`-th threshold of the export grid, `k / 1000`.
pub fn grid_threshold(k: usize) -> f64 {
    k as f64 / (CURVE_GRID_POINTS - 1) as f64
}

/// Writes one curve as `threshold,value,band_lo,band_hi` rows. Without an
/// attached band the band columns repeat the value.
pub fn write_curve(curve: &NamedCurve, writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["threshold", "value", "band_lo", "band_hi"])
        .map_err(csv_error)?;
    for k in 0..CURVE_GRID_POINTS {
        let t = grid_threshold(k);
        let v = curve.curve.value_at(t);
        let (lo, hi) = curve.curve.band_at(t).unwrap_or((v, v));
        w.write_record([t, v, lo, hi].map(|x| x.to_string()))
            .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes one `<label>.csv` file per curve into `dir`, creating it if needed.
pub fn export_curves(curves: &[NamedCurve], dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    if curves.is_empty() {
        return Err(Error::Input("no curves to export".into()));
    }
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    curves
        .iter()
        .map(|c| {
            let path = dir.join(format!("{}.csv", c.label));
            let mut file = BufWriter::new(File::create(&path)?);
            write_curve(c, &mut file)?;
            file.flush()?;
            Ok(path)
        })
        .collect()
}
