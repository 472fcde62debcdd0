//! CSV and JSON Lines score files.
//!
//! Both formats carry the same fields. Optional numeric fields are empty when
//! missing, booleans are `true`/`false`. An `is_genuine` column may be present;
//! if so it must agree with the subject ids. Normalized files add
//! `est_log_far` and `extrapolated`.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use covfar_core::data::{
    CameraLocation, Modality, ProbeMetadata, Provenance, ScoreRow, ScoreTable, SubjectSex,
};
use covfar_core::normalization::{NormalizationMap, NormalizedRow, NormalizedTable};
use covfar_core::Error as CoreError;

use crate::error::{CliError, Result};

pub const COLUMNS: [&str; 17] = [
    "probe_id",
    "subject_id",
    "gallery_subject_id",
    "algorithm",
    "raw_score",
    "collection_id",
    "sensor_model",
    "camera_location",
    "modality",
    "head_height_px",
    "face_restricted",
    "has_gait",
    "has_turbulence",
    "solar_wm2",
    "wind_ms",
    "temperature_c",
    "subject_sex",
];

pub const IS_GENUINE: &str = "is_genuine";
pub const EST_LOG_FAR: &str = "est_log_far";
pub const EXTRAPOLATED: &str = "extrapolated";

/// Column index by header name, and the raw field values of every row.
type Records = (HashMap<String, usize>, Vec<Vec<String>>);

/// One parsed record: field values by column name.
struct Record<'a> {
    index: &'a HashMap<String, usize>,
    values: Vec<String>,
    row: usize,
}

impl Record<'_> {
    fn get(&self, column: &str) -> Option<&str> {
        self.index
            .get(column)
            .and_then(|&i| self.values.get(i))
            .map(|s| s.trim())
    }

    fn fail(&self, path: &Path, message: String) -> CliError {
        CliError::Parse {
            path: path.into(),
            row: self.row,
            message,
        }
    }

    fn text(&self, path: &Path, column: &str) -> Result<String> {
        match self.get(column) {
            Some(v) => Ok(v.to_string()),
            None => Err(self.fail(path, format!("no value for {column}"))),
        }
    }

    fn number(&self, path: &Path, column: &str) -> Result<f64> {
        let raw = self.get(column).unwrap_or("");
        let v: f64 = raw
            .parse()
            .map_err(|_| self.fail(path, format!("{column}: cannot parse {raw:?} as a number")))?;
        if !v.is_finite() {
            return Err(self.fail(path, format!("{column}: non-finite value {raw:?}")));
        }
        Ok(v)
    }

    fn optional_number(&self, path: &Path, column: &str) -> Result<Option<f64>> {
        match self.get(column) {
            None | Some("") => Ok(None),
            Some(_) => self.number(path, column).map(Some),
        }
    }

    fn flag(&self, path: &Path, column: &str) -> Result<bool> {
        let raw = self.get(column).unwrap_or("");
        if raw.eq_ignore_ascii_case("true") {
            Ok(true)
        } else if raw.eq_ignore_ascii_case("false") {
            Ok(false)
        } else {
            Err(self.fail(
                path,
                format!("{column}: expected true or false, got {raw:?}"),
            ))
        }
    }
}

/// `"Long Range"`, `"long-range"` and `"long_range"` all become `long_range`.
fn snake(s: &str) -> String {
    s.trim().to_ascii_lowercase().replace([' ', '-'], "_")
}

fn parse_row(rec: &Record, path: &Path) -> Result<ScoreRow> {
    let camera_location: CameraLocation = snake(&rec.text(path, "camera_location")?)
        .parse()
        .map_err(|m: String| rec.fail(path, m))?;
    let modality: Modality = snake(&rec.text(path, "modality")?)
        .parse()
        .map_err(|m: String| rec.fail(path, m))?;
    let probe = ProbeMetadata {
        probe_id: rec.text(path, "probe_id")?,
        subject_id: rec.text(path, "subject_id")?,
        collection_id: rec.text(path, "collection_id")?,
        sensor_model: rec.text(path, "sensor_model")?,
        camera_location,
        modality,
        head_height_px: rec.optional_number(path, "head_height_px")?,
        face_restricted: rec.flag(path, "face_restricted")?,
        has_gait: rec.flag(path, "has_gait")?,
        has_turbulence: rec.flag(path, "has_turbulence")?,
        solar_wm2: rec.optional_number(path, "solar_wm2")?,
        wind_ms: rec.optional_number(path, "wind_ms")?,
        temperature_c: rec.optional_number(path, "temperature_c")?,
        subject_sex: SubjectSex::parse(rec.get("subject_sex").unwrap_or("")),
    };
    let row = ScoreRow::new(
        probe,
        rec.text(path, "gallery_subject_id")?,
        rec.text(path, "algorithm")?,
        rec.number(path, "raw_score")?,
    );
    if rec.index.contains_key(IS_GENUINE) && rec.flag(path, IS_GENUINE)? != row.is_genuine {
        return Err(rec.fail(
            path,
            "is_genuine disagrees with probe and gallery subject ids".into(),
        ));
    }
    Ok(row)
}

/// Core validation reports 0-based row indices; files count data rows from 1.
fn one_based(e: CoreError) -> CoreError {
    match e {
        CoreError::NonFinite { field, row } => CoreError::NonFinite {
            field,
            row: row + 1,
        },
        CoreError::DuplicateTriple {
            row,
            probe_id,
            gallery_subject_id,
            algorithm,
        } => CoreError::DuplicateTriple {
            row: row + 1,
            probe_id,
            gallery_subject_id,
            algorithm,
        },
        CoreError::LabelMismatch { row } => CoreError::LabelMismatch { row: row + 1 },
        CoreError::InconsistentProbe { row, probe_id } => CoreError::InconsistentProbe {
            row: row + 1,
            probe_id,
        },
        other => other,
    }
}

fn is_jsonl(path: &Path) -> bool {
    matches!(
        path.extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .as_deref(),
        Some("jsonl" | "ndjson")
    )
}

/// Reads records from CSV or JSON Lines, checking that `required` columns exist.
fn read_records(path: &Path, required: &[&str]) -> Result<Records> {
    let (index, rows) = if is_jsonl(path) {
        read_jsonl(path)?
    } else {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(CliError::csv(path))?;
        let headers = reader.headers().map_err(CliError::csv(path))?.clone();
        let index: HashMap<String, usize> = headers
            .iter()
            .enumerate()
            .map(|(i, h)| (h.to_string(), i))
            .collect();
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(CliError::csv(path))?;
            rows.push(rec.iter().map(str::to_string).collect());
        }
        (index, rows)
    };
    for col in required {
        if !index.contains_key(*col) {
            return Err(CliError::MissingColumn {
                path: path.into(),
                column: (*col).into(),
            });
        }
    }
    Ok((index, rows))
}

fn read_jsonl(path: &Path) -> Result<Records> {
    let file = File::open(path).map_err(CliError::io(path))?;
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut objects = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(CliError::io(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Map<String, serde_json::Value> = serde_json::from_str(&line)
            .map_err(|e| CliError::Parse {
                path: path.into(),
                row: i + 1,
                message: e.to_string(),
            })?;
        for key in value.keys() {
            let next = index.len();
            index.entry(key.clone()).or_insert(next);
        }
        objects.push(value);
    }
    let rows = objects
        .into_iter()
        .map(|obj| {
            let mut values = vec![String::new(); index.len()];
            for (k, v) in obj {
                values[index[&k]] = match v {
                    serde_json::Value::Null => String::new(),
                    serde_json::Value::String(s) => s,
                    other => other.to_string(),
                };
            }
            values
        })
        .collect();
    Ok((index, rows))
}

fn provenance(path: &Path) -> Provenance {
    Provenance {
        source: path.display().to_string(),
        ingested_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
    }
}

pub fn read_scores(path: &Path) -> Result<ScoreTable> {
    let (index, raw) = read_records(path, &COLUMNS)?;
    let mut rows = Vec::with_capacity(raw.len());
    for (i, values) in raw.into_iter().enumerate() {
        let rec = Record {
            index: &index,
            values,
            row: i + 1,
        };
        rows.push(parse_row(&rec, path)?);
    }
    ScoreTable::new(rows, provenance(path)).map_err(|e| CliError::Table {
        path: path.into(),
        source: one_based(e),
    })
}

/// True if the file has an `est_log_far` column.
pub fn is_normalized(path: &Path) -> Result<bool> {
    if is_jsonl(path) {
        let (index, _) = read_jsonl(path)?;
        return Ok(index.contains_key(EST_LOG_FAR));
    }
    let mut reader = csv::Reader::from_path(path).map_err(CliError::csv(path))?;
    Ok(reader
        .headers()
        .map_err(CliError::csv(path))?
        .iter()
        .any(|h| h.trim() == EST_LOG_FAR))
}

pub fn read_normalized(
    path: &Path,
    maps: BTreeMap<String, NormalizationMap>,
) -> Result<NormalizedTable> {
    let mut required = COLUMNS.to_vec();
    required.extend([EST_LOG_FAR, EXTRAPOLATED]);
    let (index, raw) = read_records(path, &required)?;
    let mut rows = Vec::with_capacity(raw.len());
    let mut extra = Vec::with_capacity(raw.len());
    for (i, values) in raw.into_iter().enumerate() {
        let rec = Record {
            index: &index,
            values,
            row: i + 1,
        };
        rows.push(parse_row(&rec, path)?);
        extra.push((
            rec.number(path, EST_LOG_FAR)?,
            rec.flag(path, EXTRAPOLATED)?,
        ));
    }
    // same validation as a raw score file
    let table = ScoreTable::new(rows, provenance(path)).map_err(|e| CliError::Table {
        path: path.into(),
        source: one_based(e),
    })?;
    let rows = table
        .into_rows()
        .into_iter()
        .zip(extra)
        .map(|(row, (est_log_far, extrapolated))| NormalizedRow {
            row,
            est_log_far,
            extrapolated,
        })
        .collect();
    Ok(NormalizedTable { rows, maps })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn row_fields(r: &ScoreRow) -> Vec<String> {
    let p = &r.probe;
    vec![
        p.probe_id.clone(),
        p.subject_id.clone(),
        r.gallery_subject_id.clone(),
        r.algorithm.clone(),
        r.raw_score.to_string(),
        p.collection_id.clone(),
        p.sensor_model.clone(),
        p.camera_location.as_str().into(),
        p.modality.as_str().into(),
        opt(p.head_height_px),
        p.face_restricted.to_string(),
        p.has_gait.to_string(),
        p.has_turbulence.to_string(),
        opt(p.solar_wm2),
        opt(p.wind_ms),
        opt(p.temperature_c),
        match &p.subject_sex {
            SubjectSex::Unspecified => String::new(),
            s => s.as_str().into(),
        },
        r.is_genuine.to_string(),
    ]
}

fn header(extra: &[&str]) -> Vec<String> {
    COLUMNS
        .iter()
        .chain(&[IS_GENUINE])
        .chain(extra)
        .map(|s| s.to_string())
        .collect()
}

/// CSV text of a score table; floats use the shortest representation that
/// parses back to the same value.
pub fn scores_csv(table: &ScoreTable) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let wrap = |e: csv::Error| CliError::Usage(format!("csv encoding: {e}"));
    w.write_record(header(&[])).map_err(wrap)?;
    for r in table.rows() {
        w.write_record(row_fields(r)).map_err(wrap)?;
    }
    w.into_inner()
        .map_err(|e| CliError::Usage(format!("csv encoding: {e}")))
}

pub fn normalized_csv(table: &NormalizedTable) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let wrap = |e: csv::Error| CliError::Usage(format!("csv encoding: {e}"));
    w.write_record(header(&[EST_LOG_FAR, EXTRAPOLATED]))
        .map_err(wrap)?;
    for r in &table.rows {
        let mut f = row_fields(&r.row);
        f.push(r.est_log_far.to_string());
        f.push(r.extrapolated.to_string());
        w.write_record(f).map_err(wrap)?;
    }
    w.into_inner()
        .map_err(|e| CliError::Usage(format!("csv encoding: {e}")))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(CliError::io(path))?;
    serde_json::from_reader(BufReader::new(file)).map_err(CliError::json(path))
}

pub fn to_json<T: serde::Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("serializable value");
    out.push(b'\n');
    out
}
