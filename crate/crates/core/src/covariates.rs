//! Categorical covariates, treatment-coded design matrices and scenarios.
//!
//! Every covariate has an ordered list of levels whose first entry is the
//! reference. The design matrix holds an intercept column followed by one
//! 0/1 indicator per non-reference level, covariates in spec order.
//!
//! Names are matched leniently: case, whitespace and punctuation are ignored,
//! so `"Camera Loc=Long-Range"` resolves to the `Camera Location` covariate and
//! its `Long Range` level.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::ScoreRow;
use crate::error::{Error, Result};
use crate::normalization::NormalizedTable;

/// Half-open interval `[lower, upper)`; `None` is unbounded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub level: String,
}

impl Bin {
    fn new(lower: f64, upper: f64, level: &str) -> Bin {
        Bin {
            lower: lower.is_finite().then_some(lower),
            upper: upper.is_finite().then_some(upper),
            level: level.to_string(),
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lower.is_none_or(|lo| v >= lo) && self.upper.is_none_or(|hi| v < hi)
    }
}

const INF: f64 = f64::INFINITY;

const HEAD_HEIGHT_BINS: [(f64, f64, &str); 6] = [
    (90.0, INF, ">90 Pix"),
    (60.0, 90.0, "60-90 Pix"),
    (50.0, 60.0, "50-60 Pix"),
    (40.0, 50.0, "40-50 Pix"),
    (30.0, 40.0, "30-40 Pix"),
    (0.0, 30.0, "<30 Pix"),
];
pub const RESTRICTED: &str = "Restricted";

const SOLAR_BINS: [(f64, f64, &str); 4] = [
    (0.0, 300.0, "0-300 W/M$^2$"),
    (300.0, 600.0, "300-600 W/M$^2$"),
    (600.0, 900.0, "600-900 W/M$^2$"),
    (900.0, INF, "Above 900 W/M$^2$"),
];

const WIND_BINS: [(f64, f64, &str); 4] = [
    (0.0, 3.0, "0-3 M/S"),
    (3.0, 6.0, "3-6 M/S"),
    (6.0, 9.0, "6-9 M/S"),
    (9.0, 12.0, "9-12 M/S"),
];

const TEMPERATURE_BINS: [(f64, f64, &str); 5] = [
    (-INF, 0.0, "Below 0 C"),
    (0.0, 10.0, "0-10 C"),
    (10.0, 20.0, "10-20 C"),
    (20.0, 30.0, "20-30 C"),
    (30.0, 40.0, "30-40 C"),
];

fn classify(table: &[(f64, f64, &'static str)], covariate: &str, v: f64) -> Result<&'static str> {
    table
        .iter()
        .find(|(lo, hi, _)| v >= *lo && v < *hi)
        .map(|(_, _, l)| *l)
        .ok_or_else(|| Error::OutOfRange {
            covariate: covariate.into(),
            value: v,
        })
}

fn non_negative(field: &'static str, v: f64) -> Result<f64> {
    if v.is_nan() {
        Err(Error::NonFinite { field, row: 0 })
    } else if v < 0.0 {
        Err(Error::NegativeValue { field, value: v })
    } else {
        Ok(v)
    }
}

pub fn bin_head_height(pixels: Option<f64>, face_restricted: bool) -> Result<&'static str> {
    if let Some(p) = pixels {
        non_negative("head_height_px", p)?;
    }
    match pixels {
        Some(p) if !face_restricted => classify(&HEAD_HEIGHT_BINS, "Head Height", p),
        _ => Ok(RESTRICTED),
    }
}

pub fn bin_solar(wm2: f64) -> Result<&'static str> {
    classify(
        &SOLAR_BINS,
        "Solar Loading",
        non_negative("solar_wm2", wm2)?,
    )
}

pub fn bin_wind(ms: f64) -> Result<&'static str> {
    classify(&WIND_BINS, "Wind Speed", non_negative("wind_ms", ms)?)
}

pub fn bin_temperature(c: f64) -> Result<&'static str> {
    if c.is_nan() {
        return Err(Error::NonFinite {
            field: "temperature_c",
            row: 0,
        });
    }
    classify(&TEMPERATURE_BINS, "Temperature", c)
}

/// Canonical group label for a sensor model and collection.
pub fn make_group_key(sensor_model: &str, collection_id: &str) -> Result<String> {
    if sensor_model.trim().is_empty() || collection_id.trim().is_empty() {
        return Err(Error::EmptyGroupComponent);
    }
    Ok(format!("{sensor_model} - {collection_id}"))
}

/// Lowercased alphanumerics plus `<`/`>`; everything else is ignored.
pub fn match_key(s: &str) -> String {
    s.chars()
        .filter_map(|c| match c {
            '²' => Some('2'),
            c if c.is_alphanumeric() || c == '<' || c == '>' => Some(c.to_ascii_lowercase()),
            _ => None,
        })
        .collect()
}

/// Where a covariate's level comes from in the probe metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovariateSource {
    /// The row's algorithm tag names the level.
    Algorithm,
    /// Levels are `[false, true]`.
    HasGait,
    HasTurbulence,
    Modality,
    CameraLocation,
    /// Probes with a restricted face or no measurement get `restricted_level`.
    HeadHeight {
        bins: Vec<Bin>,
        restricted_level: String,
    },
    SolarLoad {
        bins: Vec<Bin>,
    },
    WindSpeed {
        bins: Vec<Bin>,
    },
    Temperature {
        bins: Vec<Bin>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Level {
    pub name: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub aliases: Vec<String>,
}

impl Level {
    fn new(name: &str) -> Level {
        Level {
            name: name.into(),
            aliases: Vec::new(),
        }
    }

    fn with_aliases(name: &str, aliases: &[&str]) -> Level {
        Level {
            name: name.into(),
            aliases: aliases.iter().map(|a| a.to_string()).collect(),
        }
    }

    fn matches(&self, key: &str) -> bool {
        match_key(&self.name) == key || self.aliases.iter().any(|a| match_key(a) == key)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Covariate {
    pub name: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub aliases: Vec<String>,
    /// First level is the reference.
    pub levels: Vec<Level>,
    pub source: CovariateSource,
}

impl Covariate {
    pub fn reference(&self) -> &str {
        &self.levels[0].name
    }

    pub fn matches(&self, name: &str) -> bool {
        let key = match_key(name);
        match_key(&self.name) == key || self.aliases.iter().any(|a| match_key(a) == key)
    }

    pub fn find_level(&self, level: &str) -> Option<usize> {
        let key = match_key(level);
        self.levels.iter().position(|l| l.matches(&key))
    }

    fn level_index(&self, level: &str) -> Result<usize> {
        self.find_level(level).ok_or_else(|| Error::UnknownLevel {
            covariate: self.name.clone(),
            level: level.into(),
        })
    }

    fn binned(
        &self,
        bins: &[Bin],
        field: &'static str,
        value: Option<f64>,
        non_neg: bool,
    ) -> Result<usize> {
        let v = value.ok_or(Error::MissingValue(field))?;
        if non_neg {
            non_negative(field, v)?;
        }
        let bin = bins
            .iter()
            .find(|b| b.contains(v))
            .ok_or_else(|| Error::OutOfRange {
                covariate: self.name.clone(),
                value: v,
            })?;
        self.level_index(&bin.level)
    }

    /// Level index of this covariate for one score row.
    pub fn level_for(&self, row: &ScoreRow) -> Result<usize> {
        let p = &row.probe;
        match &self.source {
            CovariateSource::Algorithm => self.level_index(&row.algorithm),
            CovariateSource::HasGait => Ok(usize::from(p.has_gait)),
            CovariateSource::HasTurbulence => Ok(usize::from(p.has_turbulence)),
            CovariateSource::Modality => self.level_index(p.modality.as_str()),
            CovariateSource::CameraLocation => self.level_index(p.camera_location.as_str()),
            CovariateSource::HeadHeight {
                bins,
                restricted_level,
            } => match p.head_height_px {
                Some(px) if !p.face_restricted => {
                    self.binned(bins, "head_height_px", Some(px), true)
                }
                _ => self.level_index(restricted_level),
            },
            CovariateSource::SolarLoad { bins } => {
                self.binned(bins, "solar_wm2", p.solar_wm2, true)
            }
            CovariateSource::WindSpeed { bins } => self.binned(bins, "wind_ms", p.wind_ms, true),
            CovariateSource::Temperature { bins } => {
                self.binned(bins, "temperature_c", p.temperature_c, false)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSpec(format!("{}: {msg}", self.name)));
        if self.levels.is_empty() {
            return bad("no levels".into());
        }
        for (i, l) in self.levels.iter().enumerate() {
            let key = match_key(&l.name);
            if self.levels[..i].iter().any(|o| o.matches(&key)) {
                return bad(format!("duplicate level {:?}", l.name));
            }
        }
        let check_bins = |bins: &[Bin]| -> Result<()> {
            for b in bins {
                if self.find_level(&b.level).is_none() {
                    return Err(Error::InvalidSpec(format!(
                        "{}: bin level {:?} not listed",
                        self.name, b.level
                    )));
                }
            }
            Ok(())
        };
        match &self.source {
            CovariateSource::HasGait | CovariateSource::HasTurbulence if self.levels.len() != 2 => {
                bad("flag covariates need exactly two levels".into())
            }
            CovariateSource::HeadHeight {
                bins,
                restricted_level,
            } => {
                if self.find_level(restricted_level).is_none() {
                    return bad(format!("restricted level {restricted_level:?} not listed"));
                }
                check_bins(bins)
            }
            CovariateSource::SolarLoad { bins }
            | CovariateSource::WindSpeed { bins }
            | CovariateSource::Temperature { bins } => check_bins(bins),
            _ => Ok(()),
        }
    }
}

/// How rows are assigned to random-intercept groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupingKey {
    #[default]
    SensorByCollection,
}

impl GroupingKey {
    pub fn label(self, row: &ScoreRow) -> Result<String> {
        match self {
            GroupingKey::SensorByCollection => {
                make_group_key(&row.probe.sensor_model, &row.probe.collection_id)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateSpec {
    pub covariates: Vec<Covariate>,
    #[serde(default)]
    pub grouping: GroupingKey,
}

fn binned_levels(table: &[(f64, f64, &str)]) -> Vec<Bin> {
    table
        .iter()
        .map(|&(lo, hi, l)| Bin::new(lo, hi, l))
        .collect()
}

fn plain(names: &[&str]) -> Vec<Level> {
    names.iter().map(|n| Level::new(n)).collect()
}

fn covariate(
    name: &str,
    aliases: &[&str],
    levels: Vec<Level>,
    source: CovariateSource,
) -> Covariate {
    Covariate {
        name: name.into(),
        aliases: aliases.iter().map(|a| a.to_string()).collect(),
        levels,
        source,
    }
}

impl Default for CovariateSpec {
    fn default() -> Self {
        CovariateSpec::standard()
    }
}

impl CovariateSpec {
    /// The nine covariates of the published coefficient table, with its
    /// reference levels and bin edges.
    pub fn standard() -> CovariateSpec {
        let mut head: Vec<Level> = plain(&HEAD_HEIGHT_BINS.map(|b| b.2));
        head.push(Level::new(RESTRICTED));
        let solar = SOLAR_BINS
            .iter()
            .map(|&(_, _, l)| {
                let bare = l.trim_end_matches(" W/M$^2$");
                Level::with_aliases(l, &[bare])
            })
            .collect();
        CovariateSpec {
            covariates: vec![
                covariate(
                    "Algorithm",
                    &[],
                    plain(&["System A", "System B", "System C", "System D", "System E"]),
                    CovariateSource::Algorithm,
                ),
                covariate(
                    "Has Gait",
                    &[],
                    plain(&["False", "True"]),
                    CovariateSource::HasGait,
                ),
                covariate(
                    "Has Turb.",
                    &["Has Turbulence"],
                    plain(&["False", "True"]),
                    CovariateSource::HasTurbulence,
                ),
                covariate(
                    "Head Height",
                    &["Head Hgt"],
                    head,
                    CovariateSource::HeadHeight {
                        bins: binned_levels(&HEAD_HEIGHT_BINS),
                        restricted_level: RESTRICTED.into(),
                    },
                ),
                covariate(
                    "Modality",
                    &[],
                    plain(&["Face", "Body"]),
                    CovariateSource::Modality,
                ),
                covariate(
                    "Camera Location",
                    &["Camera Loc"],
                    vec![
                        Level::with_aliases("Ctrl", &["Control"]),
                        Level::new("Short Range"),
                        Level::with_aliases("Medium Range", &["Med-Range", "Med Range"]),
                        Level::new("Long Range"),
                        Level::new("Elevated"),
                        Level::with_aliases("Uav", &["UAV"]),
                    ],
                    CovariateSource::CameraLocation,
                ),
                covariate(
                    "Solar Loading",
                    &["Solar Load"],
                    solar,
                    CovariateSource::SolarLoad {
                        bins: binned_levels(&SOLAR_BINS),
                    },
                ),
                covariate(
                    "Wind Speed",
                    &[],
                    plain(&WIND_BINS.map(|b| b.2)),
                    CovariateSource::WindSpeed {
                        bins: binned_levels(&WIND_BINS),
                    },
                ),
                covariate(
                    "Temperature",
                    &[],
                    plain(&TEMPERATURE_BINS.map(|b| b.2)),
                    CovariateSource::Temperature {
                        bins: binned_levels(&TEMPERATURE_BINS),
                    },
                ),
            ],
            grouping: GroupingKey::SensorByCollection,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (i, c) in self.covariates.iter().enumerate() {
            c.validate()?;
            if self.covariates[..i].iter().any(|o| o.matches(&c.name)) {
                return Err(Error::InvalidSpec(format!(
                    "duplicate covariate {:?}",
                    c.name
                )));
            }
        }
        Ok(())
    }

    pub fn find(&self, name: &str) -> Option<usize> {
        self.covariates.iter().position(|c| c.matches(name))
    }

    pub fn covariate(&self, name: &str) -> Result<&Covariate> {
        self.find(name)
            .map(|i| &self.covariates[i])
            .ok_or_else(|| Error::UnknownCovariate(name.into()))
    }

    /// Intercept plus one column per non-reference level.
    pub fn columns(&self) -> Vec<DesignColumn> {
        let mut cols = vec![DesignColumn::intercept()];
        for c in &self.covariates {
            for l in &c.levels[1..] {
                cols.push(DesignColumn {
                    covariate: Some(c.name.clone()),
                    level: l.name.clone(),
                });
            }
        }
        cols
    }

    /// Level index per covariate for one row.
    pub fn levels_for(&self, row: &ScoreRow) -> Result<Vec<usize>> {
        self.covariates.iter().map(|c| c.level_for(row)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignColumn {
    /// `None` for the intercept.
    pub covariate: Option<String>,
    pub level: String,
}

impl DesignColumn {
    pub fn intercept() -> DesignColumn {
        DesignColumn {
            covariate: None,
            level: "-".into(),
        }
    }

    pub fn is_intercept(&self) -> bool {
        self.covariate.is_none()
    }

    pub fn name(&self) -> String {
        match &self.covariate {
            None => "Intercept".into(),
            Some(c) => format!("{c}[{}]", self.level),
        }
    }
}

/// Covariate levels in spec order with the number of rows at each level.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CovariateLayout {
    pub name: String,
    pub levels: Vec<String>,
    pub counts: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignMatrix {
    pub y: Vec<f64>,
    /// Row-major, `y.len() x columns.len()`.
    x: Vec<f64>,
    pub columns: Vec<DesignColumn>,
    pub groups: Vec<String>,
    pub layout: Vec<CovariateLayout>,
}

impl DesignMatrix {
    /// Builds a design from level indices (`levels[i]` holds one index per
    /// covariate for row `i`).
    pub fn from_levels(
        spec: &CovariateSpec,
        levels: &[Vec<usize>],
        y: Vec<f64>,
        groups: Vec<String>,
    ) -> Result<Self> {
        if levels.len() != y.len() || groups.len() != y.len() {
            return Err(Error::InvalidSpec(format!(
                "design inputs disagree in length: {} level rows, {} responses, {} groups",
                levels.len(),
                y.len(),
                groups.len()
            )));
        }
        let columns = spec.columns();
        let p = columns.len();
        // first column index of each covariate's block
        let mut offsets = Vec::with_capacity(spec.covariates.len());
        let mut next = 1;
        for c in &spec.covariates {
            offsets.push(next);
            next += c.levels.len() - 1;
        }
        let mut layout: Vec<CovariateLayout> = spec
            .covariates
            .iter()
            .map(|c| CovariateLayout {
                name: c.name.clone(),
                levels: c.levels.iter().map(|l| l.name.clone()).collect(),
                counts: vec![0; c.levels.len()],
            })
            .collect();
        let mut x = vec![0.0; y.len() * p];
        for (i, row_levels) in levels.iter().enumerate() {
            if row_levels.len() != spec.covariates.len() {
                return Err(Error::InvalidSpec(format!(
                    "row {i} has {} levels",
                    row_levels.len()
                )));
            }
            let xr = &mut x[i * p..(i + 1) * p];
            xr[0] = 1.0;
            for (k, &lvl) in row_levels.iter().enumerate() {
                let cov = &spec.covariates[k];
                if lvl >= cov.levels.len() {
                    return Err(Error::UnknownLevel {
                        covariate: cov.name.clone(),
                        level: format!("#{lvl}"),
                    });
                }
                layout[k].counts[lvl] += 1;
                if lvl > 0 {
                    xr[offsets[k] + lvl - 1] = 1.0;
                }
            }
        }
        Ok(DesignMatrix {
            y,
            x,
            columns,
            groups,
            layout,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.y.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.n_cols();
        &self.x[i * p..(i + 1) * p]
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn column_names(&self) -> Vec<String> {
        self.columns.iter().map(DesignColumn::name).collect()
    }

    /// Same design with a different response vector.
    pub fn with_response(&self, y: Vec<f64>) -> DesignMatrix {
        assert_eq!(y.len(), self.y.len());
        DesignMatrix { y, ..self.clone() }
    }

    /// Rows reordered by `order` (a permutation of `0..n_rows`).
    pub fn permuted(&self, order: &[usize]) -> DesignMatrix {
        let mut x = Vec::with_capacity(self.x.len());
        for &i in order {
            x.extend_from_slice(self.row(i));
        }
        DesignMatrix {
            y: order.iter().map(|&i| self.y[i]).collect(),
            x,
            columns: self.columns.clone(),
            groups: order.iter().map(|&i| self.groups[i].clone()).collect(),
            layout: self.layout.clone(),
        }
    }
}

/// Design over the genuine rows of `table`, in input order. The response is
/// each row's normalized score.
pub fn build_design(table: &NormalizedTable, spec: &CovariateSpec) -> Result<DesignMatrix> {
    spec.validate()?;
    let mut levels = Vec::new();
    let mut y = Vec::new();
    let mut groups = Vec::new();
    for nrow in table.rows.iter().filter(|r| r.row.is_genuine) {
        let wrap = |e: Error| Error::Unbinnable {
            probe_id: nrow.row.probe.probe_id.clone(),
            reason: alloc::boxed::Box::new(e),
        };
        levels.push(spec.levels_for(&nrow.row).map_err(wrap)?);
        groups.push(spec.grouping.label(&nrow.row).map_err(wrap)?);
        y.push(nrow.est_log_far);
    }
    DesignMatrix::from_levels(spec, &levels, y, groups)
}

/// One chosen level per named covariate; unnamed covariates stay at their
/// reference.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub choices: Vec<(String, String)>,
}

impl Scenario {
    pub fn new() -> Scenario {
        Scenario::default()
    }

    pub fn with(mut self, covariate: &str, level: &str) -> Scenario {
        self.choices.push((covariate.into(), level.into()));
        self
    }

    /// Parses `"<Covariate>=<Level>"`.
    pub fn parse_assignment(s: &str) -> Result<(String, String)> {
        let (c, l) = s.split_once('=').ok_or_else(|| {
            Error::InvalidSpec(format!("expected <Covariate>=<Level>, got {s:?}"))
        })?;
        Ok((c.trim().into(), l.trim().into()))
    }

    /// Level index per covariate of `spec`; later choices override earlier ones.
    pub fn resolve(&self, spec: &CovariateSpec) -> Result<Vec<usize>> {
        let mut chosen = vec![0; spec.covariates.len()];
        for (c, l) in &self.choices {
            let k = spec
                .find(c)
                .ok_or_else(|| Error::UnknownCovariate(c.clone()))?;
            chosen[k] = spec.covariates[k].level_index(l)?;
        }
        Ok(chosen)
    }
}

/// Encodes a scenario exactly like a single design row.
pub fn scenario_vector(spec: &CovariateSpec, scenario: &Scenario) -> Result<Vec<f64>> {
    let levels = scenario.resolve(spec)?;
    let d = DesignMatrix::from_levels(spec, &[levels], vec![0.0], vec![String::new()])?;
    Ok(d.row(0).to_vec())
}
