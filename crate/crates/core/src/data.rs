//! Score and probe-metadata schema, table validation and the row-drop rules
//! applied before model fitting.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CameraLocation {
    Ctrl,
    ShortRange,
    MediumRange,
    LongRange,
    Elevated,
    Uav,
}

impl CameraLocation {
    pub const ALL: [CameraLocation; 6] = [
        CameraLocation::Ctrl,
        CameraLocation::ShortRange,
        CameraLocation::MediumRange,
        CameraLocation::LongRange,
        CameraLocation::Elevated,
        CameraLocation::Uav,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CameraLocation::Ctrl => "ctrl",
            CameraLocation::ShortRange => "short_range",
            CameraLocation::MediumRange => "medium_range",
            CameraLocation::LongRange => "long_range",
            CameraLocation::Elevated => "elevated",
            CameraLocation::Uav => "uav",
        }
    }
}

impl FromStr for CameraLocation {
    type Err = String;

    fn from_str(s: &str) -> core::result::Result<Self, String> {
        CameraLocation::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| alloc::format!("unknown camera_location {s:?}"))
    }
}

impl fmt::Display for CameraLocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Face,
    Body,
}

impl Modality {
    pub const ALL: [Modality; 2] = [Modality::Face, Modality::Body];

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Face => "face",
            Modality::Body => "body",
        }
    }
}

impl FromStr for Modality {
    type Err = String;

    fn from_str(s: &str) -> core::result::Result<Self, String> {
        match s {
            "face" => Ok(Modality::Face),
            "body" => Ok(Modality::Body),
            _ => Err(alloc::format!("unknown modality {s:?}")),
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Recorded subject sex. Only the distinction between a recorded value and
/// "unspecified" matters to the analysis.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubjectSex {
    Specified(String),
    Unspecified,
}

impl SubjectSex {
    /// Empty strings and "unspecified" (any case) map to [`SubjectSex::Unspecified`].
    pub fn parse(s: &str) -> SubjectSex {
        let t = s.trim();
        if t.is_empty() || t.eq_ignore_ascii_case("unspecified") {
            SubjectSex::Unspecified
        } else {
            SubjectSex::Specified(t.to_string())
        }
    }

    pub fn as_str(&self) -> &str {
        match self {
            SubjectSex::Specified(s) => s,
            SubjectSex::Unspecified => "unspecified",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeMetadata {
    pub probe_id: String,
    pub subject_id: String,
    pub collection_id: String,
    pub sensor_model: String,
    pub camera_location: CameraLocation,
    pub modality: Modality,
    pub head_height_px: Option<f64>,
    pub face_restricted: bool,
    pub has_gait: bool,
    pub has_turbulence: bool,
    pub solar_wm2: Option<f64>,
    pub wind_ms: Option<f64>,
    pub temperature_c: Option<f64>,
    pub subject_sex: SubjectSex,
}

impl ProbeMetadata {
    pub fn missing_weather(&self) -> bool {
        self.solar_wm2.is_none() || self.wind_ms.is_none() || self.temperature_c.is_none()
    }

    fn validate(&self, row: usize) -> Result<()> {
        check_optional(self.head_height_px, "head_height_px", row, true)?;
        check_optional(self.solar_wm2, "solar_wm2", row, true)?;
        check_optional(self.wind_ms, "wind_ms", row, true)?;
        check_optional(self.temperature_c, "temperature_c", row, false)?;
        Ok(())
    }
}

fn check_optional(
    v: Option<f64>,
    field: &'static str,
    row: usize,
    non_negative: bool,
) -> Result<()> {
    match v {
        Some(x) if !x.is_finite() => Err(Error::NonFinite { field, row }),
        Some(x) if non_negative && x < 0.0 => Err(Error::NegativeValue { field, value: x }),
        _ => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub probe: ProbeMetadata,
    pub gallery_subject_id: String,
    pub algorithm: String,
    pub raw_score: f64,
    pub is_genuine: bool,
}

impl ScoreRow {
    /// Builds a row, deriving the genuine/impostor label from the subject ids.
    pub fn new(
        probe: ProbeMetadata,
        gallery_subject_id: String,
        algorithm: String,
        raw_score: f64,
    ) -> Self {
        let is_genuine = probe.subject_id == gallery_subject_id;
        ScoreRow {
            probe,
            gallery_subject_id,
            algorithm,
            raw_score,
            is_genuine,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub ingested_at: String,
}

/// Validated, immutable collection of score rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    rows: Vec<ScoreRow>,
    pub provenance: Provenance,
}

impl ScoreTable {
    /// Validates every row. Error row indices are zero-based positions in `rows`.
    pub fn new(rows: Vec<ScoreRow>, provenance: Provenance) -> Result<Self> {
        let mut triples: BTreeSet<(&str, &str, &str)> = BTreeSet::new();
        let mut probes: BTreeMap<&str, &ProbeMetadata> = BTreeMap::new();
        for (i, row) in rows.iter().enumerate() {
            if !row.raw_score.is_finite() {
                return Err(Error::NonFinite {
                    field: "raw_score",
                    row: i,
                });
            }
            if row.is_genuine != (row.probe.subject_id == row.gallery_subject_id) {
                return Err(Error::LabelMismatch { row: i });
            }
            row.probe.validate(i)?;
            if !triples.insert((&row.probe.probe_id, &row.gallery_subject_id, &row.algorithm)) {
                return Err(Error::DuplicateTriple {
                    row: i,
                    probe_id: row.probe.probe_id.clone(),
                    gallery_subject_id: row.gallery_subject_id.clone(),
                    algorithm: row.algorithm.clone(),
                });
            }
            match probes.get(row.probe.probe_id.as_str()) {
                Some(prev) if **prev != row.probe => {
                    return Err(Error::InconsistentProbe {
                        row: i,
                        probe_id: row.probe.probe_id.clone(),
                    })
                }
                Some(_) => {}
                None => {
                    probes.insert(&row.probe.probe_id, &row.probe);
                }
            }
        }
        Ok(ScoreTable { rows, provenance })
    }

    pub fn rows(&self) -> &[ScoreRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn into_rows(self) -> Vec<ScoreRow> {
        self.rows
    }

    /// Distinct probe ids in order of first appearance.
    pub fn probe_ids(&self) -> Vec<&str> {
        let mut seen = BTreeSet::new();
        self.rows
            .iter()
            .map(|r| r.probe.probe_id.as_str())
            .filter(|id| seen.insert(*id))
            .collect()
    }

    /// Algorithm tags in order of first appearance.
    pub fn algorithms(&self) -> Vec<&str> {
        let mut seen = BTreeSet::new();
        self.rows
            .iter()
            .map(|r| r.algorithm.as_str())
            .filter(|a| seen.insert(*a))
            .collect()
    }
}

/// Accounting of the probes removed by [`apply_drop_rules`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropLog {
    pub dropped_missing_weather: usize,
    pub dropped_unspecified_sex: usize,
    pub retained: usize,
    pub missing_weather_probes: Vec<String>,
    pub unspecified_sex_probes: Vec<String>,
}

impl DropLog {
    pub fn total_probes(&self) -> usize {
        self.dropped_missing_weather + self.dropped_unspecified_sex + self.retained
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Fate {
    Keep,
    MissingWeather,
    UnspecifiedSex,
}

fn fate(probe: &ProbeMetadata) -> Fate {
    // weather first: a probe failing both rules counts once, here
    if probe.missing_weather() {
        Fate::MissingWeather
    } else if probe.subject_sex == SubjectSex::Unspecified {
        Fate::UnspecifiedSex
    } else {
        Fate::Keep
    }
}

/// Removes every row whose probe is missing any weather field or has an
/// unspecified subject sex.
pub fn apply_drop_rules(table: &ScoreTable) -> (ScoreTable, DropLog) {
    let mut log = DropLog::default();
    let mut seen = BTreeSet::new();
    let mut rows = Vec::new();
    for row in &table.rows {
        let f = fate(&row.probe);
        if seen.insert(row.probe.probe_id.as_str()) {
            match f {
                Fate::Keep => log.retained += 1,
                Fate::MissingWeather => {
                    log.dropped_missing_weather += 1;
                    log.missing_weather_probes.push(row.probe.probe_id.clone());
                }
                Fate::UnspecifiedSex => {
                    log.dropped_unspecified_sex += 1;
                    log.unspecified_sex_probes.push(row.probe.probe_id.clone());
                }
            }
        }
        if f == Fate::Keep {
            rows.push(row.clone());
        }
    }
    let kept = ScoreTable {
        rows,
        provenance: table.provenance.clone(),
    };
    (kept, log)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use alloc::format;

    pub(crate) fn probe(id: &str, subject: &str) -> ProbeMetadata {
        ProbeMetadata {
            probe_id: id.into(),
            subject_id: subject.into(),
            collection_id: "BGC1".into(),
            sensor_model: "Anafi".into(),
            camera_location: CameraLocation::Ctrl,
            modality: Modality::Face,
            head_height_px: Some(120.0),
            face_restricted: false,
            has_gait: false,
            has_turbulence: false,
            solar_wm2: Some(100.0),
            wind_ms: Some(1.0),
            temperature_c: Some(-5.0),
            subject_sex: SubjectSex::Specified("female".into()),
        }
    }

    fn table_of(probes: Vec<ProbeMetadata>) -> ScoreTable {
        let rows = probes
            .into_iter()
            .flat_map(|p| {
                let s = p.subject_id.clone();
                [
                    ScoreRow::new(p.clone(), s, "System A".into(), 1.0),
                    ScoreRow::new(p, "other".into(), "System A".into(), 0.0),
                ]
            })
            .collect();
        ScoreTable::new(rows, Provenance::default()).unwrap()
    }

    #[test]
    fn rejects_non_finite_score() {
        let rows = alloc::vec![
            ScoreRow::new(probe("p1", "s1"), "s1".into(), "A".into(), 1.0),
            ScoreRow::new(probe("p2", "s2"), "s2".into(), "A".into(), f64::NAN),
        ];
        let err = ScoreTable::new(rows, Provenance::default()).unwrap_err();
        assert_eq!(
            err,
            Error::NonFinite {
                field: "raw_score",
                row: 1
            }
        );
    }

    #[test]
    fn rejects_duplicate_triple() {
        let rows = alloc::vec![
            ScoreRow::new(probe("p1", "s1"), "s1".into(), "A".into(), 1.0),
            ScoreRow::new(probe("p1", "s1"), "s1".into(), "A".into(), 2.0),
        ];
        assert!(matches!(
            ScoreTable::new(rows, Provenance::default()),
            Err(Error::DuplicateTriple { row: 1, .. })
        ));
    }

    #[test]
    fn rejects_inconsistent_probe_metadata() {
        let mut other = probe("p1", "s1");
        other.wind_ms = Some(4.0);
        let rows = alloc::vec![
            ScoreRow::new(probe("p1", "s1"), "s1".into(), "A".into(), 1.0),
            ScoreRow::new(other, "s1".into(), "B".into(), 2.0),
        ];
        assert!(matches!(
            ScoreTable::new(rows, Provenance::default()),
            Err(Error::InconsistentProbe { row: 1, .. })
        ));
    }

    #[test]
    fn rejects_negative_head_height() {
        let mut p = probe("p1", "s1");
        p.head_height_px = Some(-1.0);
        let rows = alloc::vec![ScoreRow::new(p, "s1".into(), "A".into(), 1.0)];
        assert!(matches!(
            ScoreTable::new(rows, Provenance::default()),
            Err(Error::NegativeValue {
                field: "head_height_px",
                ..
            })
        ));
    }

    #[test]
    fn drops_probe_missing_wind() {
        let mut probes: Vec<_> = (0..5)
            .map(|i| probe(&format!("p{i}"), &format!("s{i}")))
            .collect();
        probes[2].wind_ms = None;
        let (kept, log) = apply_drop_rules(&table_of(probes));
        assert_eq!(log.retained, 4);
        assert_eq!(log.dropped_missing_weather, 1);
        assert_eq!(log.missing_weather_probes, ["p2"]);
        assert_eq!(kept.len(), 8);
    }

    #[test]
    fn weather_rule_takes_precedence() {
        let mut p = probe("p0", "s0");
        p.temperature_c = None;
        p.subject_sex = SubjectSex::Unspecified;
        let (_, log) = apply_drop_rules(&table_of(alloc::vec![p, probe("p1", "s1")]));
        assert_eq!(log.dropped_missing_weather, 1);
        assert_eq!(log.dropped_unspecified_sex, 0);
        assert_eq!(log.retained, 1);
    }

    #[test]
    fn sex_parsing() {
        assert_eq!(SubjectSex::parse(""), SubjectSex::Unspecified);
        assert_eq!(SubjectSex::parse("Unspecified"), SubjectSex::Unspecified);
        assert_eq!(
            SubjectSex::parse("male"),
            SubjectSex::Specified("male".into())
        );
    }
}
