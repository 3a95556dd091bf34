//! CSV and JSON file formats.
//!
//! Numbers are written with the shortest representation that parses back to
//! the same `f64`, so every CSV produced here round-trips bit for bit.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{ExtremaMethod, Summary, VisibilityReport};
use crate::coincidence::{FringeDataset, FringeMetadata, FringePoint, Pairing};
use crate::entanglement::FidelityGrid;

pub const DATASET_COLUMNS: [&str; 10] = [
    "two_theta_b_deg",
    "cAB_11",
    "cAB_21",
    "cAB_12",
    "cAB_22",
    "singles_a1",
    "singles_a2",
    "singles_b1",
    "singles_b2",
    "integration_s",
];

pub const GRID_COLUMNS: [&str; 6] = [
    "delta_length_nm",
    "theta_deg",
    "phi_deg",
    "fidelity",
    "delta_a_rad",
    "delta_b_rad",
];

pub const REPORT_COLUMNS: [&str; 14] = [
    "condition",
    "two_theta_a_deg",
    "pairing",
    "method",
    "c_max",
    "c_min",
    "sigma_max",
    "sigma_min",
    "cov_max_min",
    "visibility",
    "sigma_v",
    "normalization_factor",
    "amplitude",
    "repeats",
];

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}, column `{column}`: {message}")]
    Schema {
        line: u64,
        column: String,
        message: String,
    },
    #[error("{path}: {message}")]
    Json { path: PathBuf, message: String },
    #[error("csv: {0}")]
    Csv(String),
}

pub type Result<T, E = FormatError> = std::result::Result<T, E>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> FormatError + '_ {
    move |source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(e: csv::Error) -> FormatError {
    match e.kind() {
        csv::ErrorKind::Io(_) => FormatError::Csv(e.to_string()),
        _ => {
            let line = e.position().map_or(0, |p| p.line());
            FormatError::Schema {
                line,
                column: String::new(),
                message: e.to_string(),
            }
        }
    }
}

fn num(x: f64) -> String {
    format!("{x}")
}

/// Checks the header and yields `(line, record)` pairs.
fn records<R: Read>(reader: R, columns: &[&str]) -> Result<Vec<(u64, csv::StringRecord)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let header = rdr.headers().map_err(csv_err)?.clone();
    if header.len() != columns.len() {
        return Err(FormatError::Schema {
            line: 1,
            column: header.iter().nth(columns.len()).unwrap_or("").to_string(),
            message: format!("expected {} columns, found {}", columns.len(), header.len()),
        });
    }
    for (found, expected) in header.iter().zip(columns) {
        if found != *expected {
            return Err(FormatError::Schema {
                line: 1,
                column: found.to_string(),
                message: format!("expected column `{expected}`"),
            });
        }
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line());
        out.push((line, rec));
    }
    Ok(out)
}

fn field(rec: &csv::StringRecord, i: usize) -> &str {
    rec.get(i).unwrap_or("")
}

fn parse_f64(rec: &csv::StringRecord, line: u64, columns: &[&str], i: usize) -> Result<f64> {
    let raw = field(rec, i);
    raw.trim().parse::<f64>().map_err(|_| FormatError::Schema {
        line,
        column: columns[i].to_string(),
        message: format!("`{raw}` is not a number"),
    })
}

fn count(rec: &csv::StringRecord, line: u64, columns: &[&str], i: usize) -> Result<f64> {
    let v = parse_f64(rec, line, columns, i)?;
    if !(v.is_finite() && v >= 0.0) {
        return Err(FormatError::Schema {
            line,
            column: columns[i].to_string(),
            message: format!("count must be finite and non-negative, got {v}"),
        });
    }
    Ok(v)
}

pub fn write_dataset_csv<W: Write>(ds: &FringeDataset, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(DATASET_COLUMNS).map_err(csv_err)?;
    for p in &ds.points {
        let mut row = Vec::with_capacity(DATASET_COLUMNS.len());
        row.push(num(p.two_theta_b_deg));
        row.extend(p.coincidences.iter().map(|c| num(*c)));
        row.extend(p.singles.iter().map(|c| num(*c)));
        row.push(num(p.integration_s));
        wtr.write_record(&row).map_err(csv_err)?;
    }
    wtr.flush().map_err(|e| FormatError::Csv(e.to_string()))
}

pub fn read_dataset_csv<R: Read>(r: R) -> Result<Vec<FringePoint>> {
    let cols = &DATASET_COLUMNS;
    let mut points = Vec::new();
    for (line, rec) in records(r, cols)? {
        let two_theta_b_deg = parse_f64(&rec, line, cols, 0)?;
        if !two_theta_b_deg.is_finite() {
            return Err(FormatError::Schema {
                line,
                column: cols[0].to_string(),
                message: "angle must be finite".into(),
            });
        }
        let mut coincidences = [0.0; 4];
        for (i, c) in coincidences.iter_mut().enumerate() {
            *c = count(&rec, line, cols, 1 + i)?;
        }
        let mut singles = [0.0; 4];
        for (i, s) in singles.iter_mut().enumerate() {
            *s = count(&rec, line, cols, 5 + i)?;
        }
        let integration_s = parse_f64(&rec, line, cols, 9)?;
        if !(integration_s.is_finite() && integration_s > 0.0) {
            return Err(FormatError::Schema {
                line,
                column: cols[9].to_string(),
                message: format!("integration time must be positive, got {integration_s}"),
            });
        }
        points.push(FringePoint {
            two_theta_b_deg,
            coincidences,
            singles,
            integration_s,
        });
    }
    Ok(points)
}

/// Sidecar path `<stem>.meta.json` next to a dataset CSV.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("meta.json")
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| FormatError::Json {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| FormatError::Json {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn create(path: &Path) -> Result<fs::File> {
    fs::File::create(path).map_err(io_err(path))
}

fn open(path: &Path) -> Result<fs::File> {
    fs::File::open(path).map_err(io_err(path))
}

/// Write the CSV and its metadata sidecar.
pub fn save_dataset(ds: &FringeDataset, csv_path: &Path) -> Result<()> {
    write_dataset_csv(ds, create(csv_path)?)?;
    write_json(&ds.metadata, &sidecar_path(csv_path))
}

pub fn load_dataset(csv_path: &Path) -> Result<FringeDataset> {
    let points = read_dataset_csv(open(csv_path)?).map_err(|e| with_path(e, csv_path))?;
    let metadata: FringeMetadata = read_json(&sidecar_path(csv_path))?;
    Ok(FringeDataset { metadata, points })
}

fn with_path(e: FormatError, path: &Path) -> FormatError {
    match e {
        FormatError::Schema {
            line,
            column,
            message,
        } => FormatError::Schema {
            line,
            column,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    }
}

/// One row of a fidelity panel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridRecord {
    pub delta_length_nm: f64,
    pub theta_deg: f64,
    pub phi_deg: f64,
    pub fidelity: f64,
    pub delta_a_rad: f64,
    pub delta_b_rad: f64,
}

/// Rows of a panel, θ-major. The degree axes label the grid's radian axes.
pub fn grid_records(
    grid: &FidelityGrid,
    theta_deg: &[f64],
    phi_deg: &[f64],
    delta_length_nm: f64,
) -> Vec<GridRecord> {
    assert_eq!(theta_deg.len(), grid.theta_axis.len());
    assert_eq!(phi_deg.len(), grid.phi_axis.len());
    let mut out = Vec::with_capacity(theta_deg.len() * phi_deg.len());
    for (i, t) in theta_deg.iter().enumerate() {
        for (j, p) in phi_deg.iter().enumerate() {
            let c = grid.compensation[i][j];
            out.push(GridRecord {
                delta_length_nm,
                theta_deg: *t,
                phi_deg: *p,
                fidelity: grid.values[i][j],
                delta_a_rad: c.delta_a,
                delta_b_rad: c.delta_b,
            });
        }
    }
    out
}

pub fn write_grid_csv<W: Write>(rows: &[GridRecord], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(GRID_COLUMNS).map_err(csv_err)?;
    for r in rows {
        wtr.write_record([
            num(r.delta_length_nm),
            num(r.theta_deg),
            num(r.phi_deg),
            num(r.fidelity),
            num(r.delta_a_rad),
            num(r.delta_b_rad),
        ])
        .map_err(csv_err)?;
    }
    wtr.flush().map_err(|e| FormatError::Csv(e.to_string()))
}

pub fn read_grid_csv<R: Read>(r: R) -> Result<Vec<GridRecord>> {
    let cols = &GRID_COLUMNS;
    records(r, cols)?
        .into_iter()
        .map(|(line, rec)| {
            Ok(GridRecord {
                delta_length_nm: parse_f64(&rec, line, cols, 0)?,
                theta_deg: parse_f64(&rec, line, cols, 1)?,
                phi_deg: parse_f64(&rec, line, cols, 2)?,
                fidelity: parse_f64(&rec, line, cols, 3)?,
                delta_a_rad: parse_f64(&rec, line, cols, 4)?,
                delta_b_rad: parse_f64(&rec, line, cols, 5)?,
            })
        })
        .collect()
}

pub fn write_summary_csv<W: Write>(rows: &[Summary], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(Summary::COLUMNS).map_err(csv_err)?;
    for s in rows {
        wtr.write_record([
            s.condition_label.clone(),
            num(s.normalization_factor),
            num(s.avg_amplitude),
            num(s.avg_visibility),
            num(s.avg_sigma_v),
            s.method.to_string(),
        ])
        .map_err(csv_err)?;
    }
    wtr.flush().map_err(|e| FormatError::Csv(e.to_string()))
}

fn parse_method(
    rec: &csv::StringRecord,
    line: u64,
    columns: &[&str],
    i: usize,
) -> Result<ExtremaMethod> {
    field(rec, i)
        .parse()
        .map_err(|message| FormatError::Schema {
            line,
            column: columns[i].to_string(),
            message,
        })
}

pub fn read_summary_csv<R: Read>(r: R) -> Result<Vec<Summary>> {
    let cols = &Summary::COLUMNS;
    records(r, cols)?
        .into_iter()
        .map(|(line, rec)| {
            Ok(Summary {
                condition_label: field(&rec, 0).to_string(),
                normalization_factor: parse_f64(&rec, line, cols, 1)?,
                avg_amplitude: parse_f64(&rec, line, cols, 2)?,
                avg_visibility: parse_f64(&rec, line, cols, 3)?,
                avg_sigma_v: parse_f64(&rec, line, cols, 4)?,
                method: parse_method(&rec, line, cols, 5)?,
            })
        })
        .collect()
}

pub fn write_reports_csv<W: Write>(rows: &[VisibilityReport], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(REPORT_COLUMNS).map_err(csv_err)?;
    for r in rows {
        wtr.write_record([
            r.condition.clone(),
            num(r.two_theta_a_deg),
            r.pairing.column().to_string(),
            r.method.to_string(),
            num(r.c_max),
            num(r.c_min),
            num(r.sigma_max),
            num(r.sigma_min),
            num(r.cov_max_min),
            num(r.visibility),
            num(r.sigma_v),
            num(r.normalization_factor),
            num(r.average_amplitude),
            r.repeats.to_string(),
        ])
        .map_err(csv_err)?;
    }
    wtr.flush().map_err(|e| FormatError::Csv(e.to_string()))
}

pub fn read_reports_csv<R: Read>(r: R) -> Result<Vec<VisibilityReport>> {
    let cols = &REPORT_COLUMNS;
    records(r, cols)?
        .into_iter()
        .map(|(line, rec)| {
            let two_theta_a_deg = parse_f64(&rec, line, cols, 1)?;
            let pairing_raw = field(&rec, 2);
            let pairing = Pairing::from_column(pairing_raw).ok_or_else(|| FormatError::Schema {
                line,
                column: cols[2].to_string(),
                message: format!("unknown pairing `{pairing_raw}`"),
            })?;
            let repeats_raw = field(&rec, 13);
            let repeats = repeats_raw.parse().map_err(|_| FormatError::Schema {
                line,
                column: cols[13].to_string(),
                message: format!("`{repeats_raw}` is not a count"),
            })?;
            Ok(VisibilityReport {
                condition: field(&rec, 0).to_string(),
                two_theta_a_deg,
                theta_a_rad: (two_theta_a_deg / 2.0).to_radians(),
                pairing,
                method: parse_method(&rec, line, cols, 3)?,
                c_max: parse_f64(&rec, line, cols, 4)?,
                c_min: parse_f64(&rec, line, cols, 5)?,
                sigma_max: parse_f64(&rec, line, cols, 6)?,
                sigma_min: parse_f64(&rec, line, cols, 7)?,
                cov_max_min: parse_f64(&rec, line, cols, 8)?,
                visibility: parse_f64(&rec, line, cols, 9)?,
                sigma_v: parse_f64(&rec, line, cols, 10)?,
                normalization_factor: parse_f64(&rec, line, cols, 11)?,
                average_amplitude: parse_f64(&rec, line, cols, 12)?,
                repeats,
            })
        })
        .collect()
}

/// Write rows to a CSV file with one of the writers above.
pub fn save_csv<T>(
    rows: &[T],
    path: &Path,
    write: impl Fn(&[T], fs::File) -> Result<()>,
) -> Result<()> {
    write(rows, create(path)?)
}
