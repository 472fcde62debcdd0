//! Per-algorithm mapping of raw scores onto `log10(FAR)`.
//!
//! Anchor scores are the impostor quantiles at a handful of tail FARs
//! (`1e-6 ..= 1e-2` by default). An unweighted least-squares line through the
//! `(anchor score, log10 anchor FAR)` pairs gives the map
//! `log10(FAR) = m * score + b`, which is then applied to every score of that
//! algorithm. Normalized scores outside the anchored FAR range are still
//! returned, but flagged as extrapolated.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::{DropLog, ScoreRow, ScoreTable};
use crate::error::{Error, Result};
use crate::metrics::SortedScores;

pub const DEFAULT_ANCHOR_FARS: [f64; 5] = [1e-6, 1e-5, 1e-4, 1e-3, 1e-2];

/// What to do with anchors the impostor sample is too small to resolve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorPolicy {
    #[default]
    Strict,
    /// Drop unresolvable anchors as long as `min_anchors` remain.
    DropUnresolvable { min_anchors: usize },
}

impl AnchorPolicy {
    pub const DROP: AnchorPolicy = AnchorPolicy::DropUnresolvable { min_anchors: 3 };
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub far: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationMap {
    pub algorithm: String,
    pub m: f64,
    pub b: f64,
    pub anchors: Vec<Anchor>,
    pub fit_rmse: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizedScore {
    pub est_log_far: f64,
    pub extrapolated: bool,
}

impl NormalizationMap {
    pub fn apply(&self, raw_score: f64) -> NormalizedScore {
        let est_log_far = self.m * raw_score + self.b;
        let (lo, hi) = self.anchored_range();
        NormalizedScore {
            est_log_far,
            extrapolated: est_log_far < lo || est_log_far > hi,
        }
    }

    /// Raw score whose normalized value is `est_log_far`.
    pub fn invert(&self, est_log_far: f64) -> f64 {
        (est_log_far - self.b) / self.m
    }

    /// `log10` of the smallest and largest anchor FARs.
    pub fn anchored_range(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for a in &self.anchors {
            let l = libm::log10(a.far);
            lo = lo.min(l);
            hi = hi.max(l);
        }
        (lo, hi)
    }
}

pub fn apply_norm(map: &NormalizationMap, raw_score: f64) -> NormalizedScore {
    map.apply(raw_score)
}

/// Fits the tail line with every anchor required to be resolvable.
pub fn fit_tail_map(
    impostor_scores: &[f64],
    algorithm: &str,
    anchor_fars: &[f64],
) -> Result<NormalizationMap> {
    let sorted = SortedScores::new(impostor_scores)?;
    fit_sorted(&sorted, algorithm, anchor_fars, AnchorPolicy::Strict).map(|(m, _)| m)
}

/// Fits the tail line; also returns the anchors dropped under `policy`.
pub fn fit_tail_map_with(
    impostor_scores: &[f64],
    algorithm: &str,
    anchor_fars: &[f64],
    policy: AnchorPolicy,
) -> Result<(NormalizationMap, Vec<f64>)> {
    let sorted = SortedScores::new(impostor_scores)?;
    fit_sorted(&sorted, algorithm, anchor_fars, policy)
}

fn fit_sorted(
    sorted: &SortedScores,
    algorithm: &str,
    anchor_fars: &[f64],
    policy: AnchorPolicy,
) -> Result<(NormalizationMap, Vec<f64>)> {
    let mut anchors = Vec::with_capacity(anchor_fars.len());
    let mut dropped = Vec::new();
    for &far in anchor_fars {
        match sorted.threshold_at_far(far) {
            Ok(score) => anchors.push(Anchor { far, score }),
            Err(Error::InsufficientImpostorSupport { .. }) if policy != AnchorPolicy::Strict => {
                dropped.push(far)
            }
            Err(e) => return Err(e),
        }
    }
    let required = match policy {
        AnchorPolicy::Strict => 2,
        AnchorPolicy::DropUnresolvable { min_anchors } => min_anchors.max(2),
    };
    if anchors.len() < required {
        return Err(Error::TooFewAnchors {
            resolvable: anchors.len(),
            required,
        });
    }

    let n = anchors.len() as f64;
    let xs: Vec<f64> = anchors.iter().map(|a| a.score).collect();
    let ys: Vec<f64> = anchors.iter().map(|a| libm::log10(a.far)).collect();
    let x_mean = xs.iter().sum::<f64>() / n;
    let y_mean = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - x_mean) * (x - x_mean)).sum();
    let sxy: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - x_mean) * (y - y_mean))
        .sum();
    let scale = xs.iter().fold(0.0f64, |acc, x| acc.max(x.abs())).max(1.0);
    if sxx <= 1e-24 * scale * scale * n {
        return Err(Error::DegenerateFit);
    }
    let m = sxy / sxx;
    if !(m < 0.0) {
        return Err(Error::Orientation { slope: m });
    }
    let b = y_mean - m * x_mean;
    let sse: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - (m * x + b)) * (y - (m * x + b)))
        .sum();
    let map = NormalizationMap {
        algorithm: algorithm.into(),
        m,
        b,
        anchors,
        fit_rmse: libm::sqrt(sse / n),
    };
    Ok((map, dropped))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedRow {
    pub row: ScoreRow,
    pub est_log_far: f64,
    pub extrapolated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedTable {
    pub rows: Vec<NormalizedRow>,
    pub maps: BTreeMap<String, NormalizationMap>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalizeOptions {
    pub anchor_fars: Vec<f64>,
    pub policy: AnchorPolicy,
}

impl Default for NormalizeOptions {
    fn default() -> Self {
        NormalizeOptions {
            anchor_fars: DEFAULT_ANCHOR_FARS.to_vec(),
            policy: AnchorPolicy::Strict,
        }
    }
}

impl NormalizedTable {
    /// Rows of probes not listed in the drop log.
    pub fn without_dropped(&self, log: &DropLog) -> NormalizedTable {
        let dropped: BTreeSet<&str> = log
            .missing_weather_probes
            .iter()
            .chain(&log.unspecified_sex_probes)
            .map(String::as_str)
            .collect();
        NormalizedTable {
            rows: self
                .rows
                .iter()
                .filter(|r| !dropped.contains(r.row.probe.probe_id.as_str()))
                .cloned()
                .collect(),
            maps: self.maps.clone(),
        }
    }
}

/// Anchors dropped per algorithm during [`normalize_table_with`].
pub type DroppedAnchors = BTreeMap<String, Vec<f64>>;

pub fn normalize_table(table: &ScoreTable) -> Result<NormalizedTable> {
    normalize_table_with(table, &NormalizeOptions::default()).map(|(t, _)| t)
}

/// Fits one map per algorithm from that algorithm's impostor rows and applies
/// it to all of its rows.
pub fn normalize_table_with(
    table: &ScoreTable,
    options: &NormalizeOptions,
) -> Result<(NormalizedTable, DroppedAnchors)> {
    let mut impostors: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for alg in table.algorithms() {
        impostors.insert(alg, Vec::new());
    }
    for row in table.rows().iter().filter(|r| !r.is_genuine) {
        impostors
            .entry(row.algorithm.as_str())
            .or_default()
            .push(row.raw_score);
    }
    let mut maps = BTreeMap::new();
    let mut dropped = BTreeMap::new();
    for (alg, scores) in impostors {
        let (map, lost) = SortedScores::new(&scores)
            .and_then(|s| fit_sorted(&s, alg, &options.anchor_fars, options.policy))
            .map_err(|e| e.for_algorithm(alg))?;
        if !lost.is_empty() {
            dropped.insert(String::from(alg), lost);
        }
        maps.insert(String::from(alg), map);
    }
    let rows = table
        .rows()
        .iter()
        .map(|row| {
            let map = &maps[row.algorithm.as_str()];
            let s = map.apply(row.raw_score);
            NormalizedRow {
                row: row.clone(),
                est_log_far: s.est_log_far,
                extrapolated: s.extrapolated,
            }
        })
        .collect();
    Ok((NormalizedTable { rows, maps }, dropped))
}
