//! Seeded score tables with known ground truth.
//!
//! Randomness comes from a single ChaCha8 stream seeded with
//! `ChaCha8Rng::seed_from_u64(seed)`, drawn in a fixed order, so a seed
//! reproduces a table exactly.
//!
//! Impostor scores follow an exact log-linear tail per algorithm: with
//! `log10 FAR(s) = m s + b`, a score is `(log10 U - b) / m` for `U` uniform on
//! `(0, 1]`. Genuine scores are drawn on the `log10(FAR)` axis as
//! `x'beta + u_group + e` and mapped back through the inverse of the same line.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedIndex;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::covariates::{Bin, Covariate, CovariateSource, CovariateSpec, DesignMatrix};
use crate::data::{
    CameraLocation, Modality, ProbeMetadata, Provenance, ScoreRow, ScoreTable, SubjectSex,
};
use crate::error::{Error, Result};
use crate::fixture::{load_paper_coefficients, PUBLISHED_GROUP_COUNTS, PUBLISHED_GROUP_VARIANCE};

/// `log10(FAR) = slope * score + intercept` in the impostor tail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmTail {
    pub name: String,
    pub slope: f64,
    pub intercept: f64,
}

impl AlgorithmTail {
    pub fn new(name: &str, slope: f64, intercept: f64) -> AlgorithmTail {
        AlgorithmTail {
            name: name.into(),
            slope,
            intercept,
        }
    }

    pub fn raw_from_log_far(&self, log_far: f64) -> f64 {
        (log_far - self.intercept) / self.slope
    }

    /// One impostor score.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        // 1 - [0, 1) is (0, 1]
        let u = 1.0 - rng.random::<f64>();
        self.raw_from_log_far(libm::log10(u))
    }
}

/// `n` impostor scores from `tail`.
pub fn sample_tail_scores(tail: &AlgorithmTail, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| tail.sample(&mut rng)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupWeight {
    pub sensor_model: String,
    pub collection_id: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_probes: usize,
    pub n_subjects: usize,
    /// Gallery subjects with no probes.
    pub n_distractors: usize,
    /// Names must be levels of the spec's algorithm covariate.
    pub algorithms: Vec<AlgorithmTail>,
    pub impostors_per_algorithm: usize,
    /// Coefficient per design column name (`"Intercept"`, `"Cov[Level]"`);
    /// unlisted columns are zero.
    pub true_beta: Vec<(String, f64)>,
    pub group_sd: f64,
    pub residual_sd: f64,
    /// Level frequencies per covariate, in level order. Unlisted covariates
    /// are uniform; the algorithm covariate is ignored since every probe is
    /// scored by every algorithm.
    pub frequencies: Vec<(String, Vec<f64>)>,
    pub groups: Vec<GroupWeight>,
    pub missing_weather_fraction: f64,
    pub unspecified_sex_fraction: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig::published_shape(7)
    }
}

fn default_tails() -> Vec<AlgorithmTail> {
    vec![
        AlgorithmTail::new("System A", -0.05, 1.0),
        AlgorithmTail::new("System B", -4.0, 0.5),
        AlgorithmTail::new("System C", -0.8, -0.2),
        AlgorithmTail::new("System D", -10.0, 3.0),
        AlgorithmTail::new("System E", -0.02, 0.0),
    ]
}

impl SynthConfig {
    /// Sized and weighted like the published analysis: 9215 probes of 371
    /// subjects, five algorithms, the 55 sensor x collection groups weighted
    /// by their row counts, level frequencies from the probe counts, and the
    /// published coefficients and variance components as truth.
    pub fn published_shape(seed: u64) -> SynthConfig {
        let table = load_paper_coefficients();
        let true_beta = table
            .iter()
            .filter(|s| !s.reference)
            .map(|s| {
                let name = if s.is_intercept() {
                    String::from("Intercept")
                } else {
                    format!("{}[{}]", s.cov_name, s.level)
                };
                (name, s.coef)
            })
            .collect();
        let total: u64 = PUBLISHED_GROUP_COUNTS.iter().map(|g| g.1).sum();
        let mut frequencies: Vec<(String, Vec<f64>)> = Vec::new();
        for s in table
            .iter()
            .filter(|s| !s.is_intercept() && s.cov_name != "Algorithm")
        {
            if s.reference {
                frequencies.push((s.cov_name.clone(), Vec::new()));
            }
            let n = s.num_probes.unwrap_or(0);
            frequencies.last_mut().unwrap().1.push(n as f64);
        }
        for (_, f) in &mut frequencies {
            // the flag rows print 0 for `True`; the complement of `False` is used instead
            if f.len() == 2 && f[1] == 0.0 {
                f[1] = total as f64 - f[0];
            }
            let sum: f64 = f.iter().sum();
            f.iter_mut().for_each(|x| *x /= sum);
        }
        let groups = PUBLISHED_GROUP_COUNTS
            .iter()
            .map(|(label, n)| {
                let (sensor, collection) = label.split_once(" - ").unwrap();
                GroupWeight {
                    sensor_model: sensor.into(),
                    collection_id: collection.into(),
                    weight: *n as f64,
                }
            })
            .collect();
        SynthConfig {
            seed,
            n_probes: 9215,
            n_subjects: 371,
            n_distractors: 487,
            algorithms: default_tails(),
            impostors_per_algorithm: 20_000,
            true_beta,
            group_sd: libm::sqrt(PUBLISHED_GROUP_VARIANCE),
            residual_sd: libm::sqrt(4.3539),
            frequencies,
            groups,
            missing_weather_fraction: 900.0 / 9215.0,
            unspecified_sex_fraction: 20.0 / 9215.0,
        }
    }

    fn validate(&self, spec: &CovariateSpec) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n_probes == 0
            || self.n_subjects == 0
            || self.algorithms.is_empty()
            || self.groups.is_empty()
        {
            return bad("probes, subjects, algorithms and groups must be non-empty".into());
        }
        if !(self.group_sd >= 0.0 && self.residual_sd > 0.0) {
            return bad("group_sd must be >= 0 and residual_sd > 0".into());
        }
        for t in &self.algorithms {
            if !(t.slope < 0.0) || !t.intercept.is_finite() {
                return bad(format!("{}: tail slope must be negative", t.name));
            }
        }
        for f in [self.missing_weather_fraction, self.unspecified_sex_fraction] {
            if !(0.0..=1.0).contains(&f) {
                return bad(format!("drop fraction {f} outside [0, 1]"));
            }
        }
        if libm::round(self.missing_weather_fraction * self.n_probes as f64)
            + libm::round(self.unspecified_sex_fraction * self.n_probes as f64)
            > self.n_probes as f64
        {
            return bad("drop fractions exceed the probe count".into());
        }
        let gallery = self.n_subjects + self.n_distractors;
        if self.impostors_per_algorithm > self.n_probes * (gallery - 1) {
            return bad(format!(
                "{} impostors per algorithm exceed the {} distinct probe x gallery pairs",
                self.impostors_per_algorithm,
                self.n_probes * (gallery - 1)
            ));
        }
        if self.groups.iter().any(|g| !(g.weight >= 0.0))
            || self.groups.iter().all(|g| g.weight == 0.0)
        {
            return bad("group weights must be non-negative with a positive total".into());
        }
        let names: Vec<String> = spec.columns().iter().map(|c| c.name()).collect();
        for (name, v) in &self.true_beta {
            if !names.contains(name) {
                return bad(format!("true_beta names unknown column {name:?}"));
            }
            if !v.is_finite() {
                return bad(format!("true_beta {name} is not finite"));
            }
        }
        for (cov, f) in &self.frequencies {
            let c = spec.covariate(cov)?;
            check_frequencies(&c.name, f, c.levels.len())?;
        }
        Ok(())
    }
}

fn check_frequencies(name: &str, f: &[f64], levels: usize) -> Result<()> {
    let sum: f64 = f.iter().sum();
    if f.len() != levels || f.iter().any(|x| !(*x >= 0.0)) || libm::fabs(sum - 1.0) > 1e-9 {
        return Err(Error::InvalidConfig(format!(
            "{name}: frequencies must be {levels} non-negative values summing to 1"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    /// Coefficient per design column, intercept first.
    pub beta: Vec<(String, f64)>,
    pub group_effects: Vec<(String, f64)>,
    pub group_sd: f64,
    pub residual_sd: f64,
    pub tails: Vec<AlgorithmTail>,
    pub missing_weather_probes: usize,
    pub unspecified_sex_probes: usize,
}

fn weighted<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Result<usize> {
    let dist =
        WeightedIndex::new(weights).map_err(|e| Error::InvalidConfig(format!("weights: {e}")))?;
    Ok(dist.sample(rng))
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Uniform value in the bin labelled `level`.
fn value_in_bins<R: Rng + ?Sized>(
    cov: &Covariate,
    bins: &[Bin],
    idx: usize,
    rng: &mut R,
) -> Result<f64> {
    let level = &cov.levels[idx].name;
    let bin = bins
        .iter()
        .find(|b| cov.find_level(&b.level) == Some(idx))
        .ok_or_else(|| {
            Error::InvalidConfig(format!("{}: no bin produces level {level:?}", cov.name))
        })?;
    let (lo, hi) = match (bin.lower, bin.upper) {
        (Some(lo), Some(hi)) => (lo, hi),
        (Some(lo), None) => (lo, lo + 100.0),
        (None, Some(hi)) => (hi - 20.0, hi),
        (None, None) => (0.0, 1.0),
    };
    Ok(lo + (hi - lo) * rng.random::<f64>())
}

/// Sets the fields of `probe` so that `cov` bins it to level `idx`.
fn realize<R: Rng + ?Sized>(
    cov: &Covariate,
    idx: usize,
    probe: &mut ProbeMetadata,
    rng: &mut R,
) -> Result<()> {
    let unmatched = || {
        Error::InvalidConfig(format!(
            "{}: level {:?} cannot be generated",
            cov.name, cov.levels[idx].name
        ))
    };
    match &cov.source {
        CovariateSource::Algorithm => {}
        CovariateSource::HasGait => probe.has_gait = idx == 1,
        CovariateSource::HasTurbulence => probe.has_turbulence = idx == 1,
        CovariateSource::Modality => {
            probe.modality = Modality::ALL
                .into_iter()
                .find(|m| cov.find_level(m.as_str()) == Some(idx))
                .ok_or_else(unmatched)?;
        }
        CovariateSource::CameraLocation => {
            probe.camera_location = CameraLocation::ALL
                .into_iter()
                .find(|c| cov.find_level(c.as_str()) == Some(idx))
                .ok_or_else(unmatched)?;
        }
        CovariateSource::HeadHeight {
            bins,
            restricted_level,
        } => {
            if cov.find_level(restricted_level) == Some(idx) {
                probe.face_restricted = true;
                probe.head_height_px = rng
                    .random_bool(0.5)
                    .then(|| 20.0 + 150.0 * rng.random::<f64>());
            } else {
                probe.face_restricted = false;
                probe.head_height_px = Some(value_in_bins(cov, bins, idx, rng)?);
            }
        }
        CovariateSource::SolarLoad { bins } => {
            probe.solar_wm2 = Some(value_in_bins(cov, bins, idx, rng)?)
        }
        CovariateSource::WindSpeed { bins } => {
            probe.wind_ms = Some(value_in_bins(cov, bins, idx, rng)?)
        }
        CovariateSource::Temperature { bins } => {
            probe.temperature_c = Some(value_in_bins(cov, bins, idx, rng)?)
        }
    }
    Ok(())
}

fn blank_probe(id: String, subject: String, g: &GroupWeight) -> ProbeMetadata {
    ProbeMetadata {
        probe_id: id,
        subject_id: subject,
        collection_id: g.collection_id.clone(),
        sensor_model: g.sensor_model.clone(),
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

fn column_beta(spec: &CovariateSpec, named: &[(String, f64)]) -> Vec<(String, f64)> {
    spec.columns()
        .iter()
        .map(|c| {
            let name = c.name();
            let v = named
                .iter()
                .rev()
                .find(|(n, _)| *n == name)
                .map_or(0.0, |(_, v)| *v);
            (name, v)
        })
        .collect()
}

fn frequencies_for(config: &[(String, Vec<f64>)], cov: &Covariate) -> Vec<f64> {
    config
        .iter()
        .find(|(n, _)| cov.matches(n))
        .map(|(_, f)| f.clone())
        .unwrap_or_else(|| vec![1.0 / cov.levels.len() as f64; cov.levels.len()])
}

/// Draws `k` distinct indices from `0..n`.
fn choose_distinct<R: Rng + ?Sized>(
    n: usize,
    k: usize,
    rng: &mut R,
    exclude: &[bool],
) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..n).filter(|&i| !exclude[i]).collect();
    for i in 0..k.min(pool.len()) {
        let j = rng.random_range(i..pool.len());
        pool.swap(i, j);
    }
    pool.truncate(k);
    pool
}

/// Generates a score table and its ground truth.
pub fn generate(config: &SynthConfig, spec: &CovariateSpec) -> Result<(ScoreTable, GroundTruth)> {
    spec.validate()?;
    config.validate(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let algorithm_cov = spec
        .covariates
        .iter()
        .position(|c| matches!(c.source, CovariateSource::Algorithm));
    if let Some(k) = algorithm_cov {
        for t in &config.algorithms {
            spec.covariates[k]
                .find_level(&t.name)
                .ok_or_else(|| Error::UnknownLevel {
                    covariate: spec.covariates[k].name.clone(),
                    level: t.name.clone(),
                })?;
        }
    }

    let group_effects: Vec<f64> = config
        .groups
        .iter()
        .map(|_| config.group_sd * normal(&mut rng))
        .collect();
    let group_weights: Vec<f64> = config.groups.iter().map(|g| g.weight).collect();
    let freqs: Vec<Vec<f64>> = spec
        .covariates
        .iter()
        .map(|c| frequencies_for(&config.frequencies, c))
        .collect();

    let gallery: Vec<String> = (0..config.n_subjects)
        .map(|i| format!("S{i:04}"))
        .chain((0..config.n_distractors).map(|i| format!("D{i:04}")))
        .collect();

    // probes: metadata, group and per-covariate levels
    let mut probes = Vec::with_capacity(config.n_probes);
    let mut probe_levels = Vec::with_capacity(config.n_probes);
    let mut probe_groups = Vec::with_capacity(config.n_probes);
    let mut probe_subjects = Vec::with_capacity(config.n_probes);
    for i in 0..config.n_probes {
        let subject = rng.random_range(0..config.n_subjects);
        let g = weighted(&group_weights, &mut rng)?;
        let mut probe = blank_probe(
            format!("P{i:05}"),
            gallery[subject].clone(),
            &config.groups[g],
        );
        let mut levels = vec![0; spec.covariates.len()];
        for (k, cov) in spec.covariates.iter().enumerate() {
            if Some(k) == algorithm_cov {
                continue;
            }
            levels[k] = weighted(&freqs[k], &mut rng)?;
            realize(cov, levels[k], &mut probe, &mut rng)?;
        }
        probes.push(probe);
        probe_levels.push(levels);
        probe_groups.push(g);
        probe_subjects.push(subject);
    }

    // drop-rule probes, disjoint and of exact size
    let n_weather = libm::round(config.missing_weather_fraction * config.n_probes as f64) as usize;
    let n_sex = libm::round(config.unspecified_sex_fraction * config.n_probes as f64) as usize;
    let mut taken = vec![false; config.n_probes];
    for i in choose_distinct(config.n_probes, n_weather, &mut rng, &taken.clone()) {
        taken[i] = true;
        match rng.random_range(0..3) {
            0 => probes[i].solar_wm2 = None,
            1 => probes[i].wind_ms = None,
            _ => probes[i].temperature_c = None,
        }
    }
    for i in choose_distinct(config.n_probes, n_sex, &mut rng, &taken) {
        probes[i].subject_sex = SubjectSex::Unspecified;
    }

    let beta = column_beta(spec, &config.true_beta);
    let beta_values: Vec<f64> = beta.iter().map(|b| b.1).collect();
    let mut rows = Vec::new();
    for tail in &config.algorithms {
        let mut levels_alg = vec![0; spec.covariates.len()];
        if let Some(k) = algorithm_cov {
            levels_alg[k] = spec.covariates[k].find_level(&tail.name).unwrap_or(0);
        }
        for (i, probe) in probes.iter().enumerate() {
            let mut levels = probe_levels[i].clone();
            if let Some(k) = algorithm_cov {
                levels[k] = levels_alg[k];
            }
            let x = DesignMatrix::from_levels(spec, &[levels], vec![0.0], vec![String::new()])?;
            let mean: f64 = x.row(0).iter().zip(&beta_values).map(|(a, b)| a * b).sum();
            let est = mean + group_effects[probe_groups[i]] + config.residual_sd * normal(&mut rng);
            rows.push(ScoreRow::new(
                probe.clone(),
                probe.subject_id.clone(),
                tail.name.clone(),
                tail.raw_from_log_far(est),
            ));
        }

        // impostors spread over probes; probe p takes gallery entries after
        // its own subject, starting at a random offset
        let span = gallery.len() - 1;
        let offsets: Vec<usize> = (0..config.n_probes)
            .map(|_| rng.random_range(0..span))
            .collect();
        for j in 0..config.impostors_per_algorithm {
            let p = j % config.n_probes;
            let k = j / config.n_probes;
            let g = (probe_subjects[p] + 1 + (offsets[p] + k) % span) % gallery.len();
            rows.push(ScoreRow::new(
                probes[p].clone(),
                gallery[g].clone(),
                tail.name.clone(),
                tail.sample(&mut rng),
            ));
        }
    }

    let table = ScoreTable::new(
        rows,
        Provenance {
            source: format!("synthetic seed {}", config.seed),
            ingested_at: String::new(),
        },
    )?;
    let truth = GroundTruth {
        seed: config.seed,
        beta,
        group_effects: config
            .groups
            .iter()
            .zip(&group_effects)
            .map(|(g, u)| (format!("{} - {}", g.sensor_model, g.collection_id), *u))
            .collect(),
        group_sd: config.group_sd,
        residual_sd: config.residual_sd,
        tails: config.algorithms.clone(),
        missing_weather_probes: n_weather,
        unspecified_sex_probes: n_sex,
    };
    Ok((table, truth))
}

/// Design-level generator: level indices, groups and response drawn
/// directly, without scores or normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignSynthConfig {
    pub seed: u64,
    pub n_rows: usize,
    pub n_groups: usize,
    pub true_beta: Vec<(String, f64)>,
    pub group_sd: f64,
    pub residual_sd: f64,
}

impl DesignSynthConfig {
    /// 5000 rows over 40 groups, published coefficients as truth,
    /// unit group and residual standard deviations of 1 and 2.
    pub fn standard(seed: u64) -> DesignSynthConfig {
        DesignSynthConfig {
            seed,
            n_rows: 5000,
            n_groups: 40,
            true_beta: SynthConfig::published_shape(seed).true_beta,
            group_sd: 1.0,
            residual_sd: 2.0,
        }
    }
}

/// Returns the design and the true coefficient per column. Levels are
/// uniform within each covariate and rows are spread uniformly over groups.
pub fn generate_design(
    config: &DesignSynthConfig,
    spec: &CovariateSpec,
) -> Result<(DesignMatrix, Vec<f64>)> {
    if config.n_groups < 2 || config.n_rows == 0 {
        return Err(Error::InvalidConfig(
            "need at least two groups and one row".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let beta: Vec<f64> = column_beta(spec, &config.true_beta)
        .into_iter()
        .map(|b| b.1)
        .collect();
    let effects: Vec<f64> = (0..config.n_groups)
        .map(|_| config.group_sd * normal(&mut rng))
        .collect();
    let mut levels = Vec::with_capacity(config.n_rows);
    let mut groups = Vec::with_capacity(config.n_rows);
    let mut group_idx = Vec::with_capacity(config.n_rows);
    for _ in 0..config.n_rows {
        levels.push(
            spec.covariates
                .iter()
                .map(|c| rng.random_range(0..c.levels.len()))
                .collect::<Vec<usize>>(),
        );
        let g = rng.random_range(0..config.n_groups);
        group_idx.push(g);
        groups.push(format!("G{g:03}"));
    }
    let design = DesignMatrix::from_levels(spec, &levels, vec![0.0; config.n_rows], groups)?;
    let y = (0..config.n_rows)
        .map(|i| {
            let mean: f64 = design.row(i).iter().zip(&beta).map(|(a, b)| a * b).sum();
            mean + effects[group_idx[i]] + config.residual_sd * normal(&mut rng)
        })
        .collect();
    Ok((design.with_response(y), beta))
}

/// Per-group counts of a generated table's genuine rows.
pub fn group_counts(table: &ScoreTable) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for r in table.rows().iter().filter(|r| r.is_genuine) {
        *out.entry(format!(
            "{} - {}",
            r.probe.sensor_model, r.probe.collection_id
        ))
        .or_insert(0) += 1;
    }
    out
}
