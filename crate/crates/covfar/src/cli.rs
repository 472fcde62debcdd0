//! Command-line front-end.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use covfar_core::covariates::{build_design, CovariateSpec, Scenario};
use covfar_core::data::{apply_drop_rules, DropLog, ScoreTable};
use covfar_core::fixture::{load_paper_coefficients, published_summary, PUBLISHED_GROUP_VARIANCE};
use covfar_core::lmm::{fit_reml, wald_stats, CoefficientStat, FittedModel};
use covfar_core::metrics::roc_curve;
use covfar_core::normalization::{
    normalize_table_with, AnchorPolicy, DroppedAnchors, NormalizationMap, NormalizeOptions,
    NormalizedTable, DEFAULT_ANCHOR_FARS,
};
use covfar_core::prediction::{predict_far, TAR_CAVEAT};
use covfar_core::report::{
    render_coefficient_table, render_forest, render_model_summary, render_normalization_fit,
    render_roc, ModelSummary, TableFormat,
};
use covfar_core::synthetic::{generate, SynthConfig};

use crate::error::{CliError, Result};
use crate::io;

#[derive(Debug, Parser)]
#[command(
    name = "covfar",
    version,
    about = "Covariate analysis of face and body verification scores"
)]
pub struct Cli {
    /// Directory all outputs are written to.
    #[arg(
        long,
        global = true,
        env = "COVFAR_OUTPUT_DIR",
        default_value = "covfar-out"
    )]
    pub output_dir: PathBuf,
    /// Overwrite existing output files.
    #[arg(long, global = true)]
    pub force: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic score table with known ground truth.
    Simulate(SimulateArgs),
    /// Fit per-algorithm tail maps and write normalized scores.
    Normalize(NormalizeArgs),
    /// Fit the random-intercept model on normalized genuine scores.
    Fit(FitArgs),
    /// Predict the FAR of a covariate scenario.
    Predict(PredictArgs),
    /// Write coefficient tables, model summary and forest plot.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Number of probes (default: the configuration's value).
    #[arg(long)]
    pub probes: Option<usize>,
    #[arg(long)]
    pub impostors_per_algorithm: Option<usize>,
    /// JSON generator configuration; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// JSON covariate spec (default: the built-in spec).
    #[arg(long)]
    pub spec: Option<PathBuf>,
}

#[derive(Debug, Args, Clone)]
pub struct AnchorArgs {
    /// Comma-separated anchor FARs.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_ANCHOR_FARS)]
    pub anchors: Vec<f64>,
    /// Fail when an anchor cannot be resolved instead of dropping it
    /// (at least three anchors are always required).
    #[arg(long)]
    pub strict_anchors: bool,
}

impl AnchorArgs {
    fn options(&self) -> NormalizeOptions {
        NormalizeOptions {
            anchor_fars: self.anchors.clone(),
            policy: if self.strict_anchors {
                AnchorPolicy::Strict
            } else {
                AnchorPolicy::DROP
            },
        }
    }
}

#[derive(Debug, Args)]
pub struct NormalizeArgs {
    /// Score file, CSV or JSON Lines (default: <output-dir>/scores.csv).
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[command(flatten)]
    pub anchors: AnchorArgs,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Raw or normalized score file (default: <output-dir>/normalized.csv if
    /// present, else <output-dir>/scores.csv).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Tail maps for a normalized input (default: normalization.json next to it).
    #[arg(long)]
    pub maps: Option<PathBuf>,
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[command(flatten)]
    pub anchors: AnchorArgs,
    #[arg(long, default_value_t = 0.95)]
    pub confidence: f64,
}

#[derive(Debug, Args)]
pub struct CoefficientSource {
    /// Fitted model (default: <output-dir>/model.json).
    #[arg(long, conflicts_with = "paper_coefficients")]
    pub input: Option<PathBuf>,
    /// Use the published coefficient table instead of a fitted model.
    #[arg(long)]
    pub paper_coefficients: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PredictFormat {
    Text,
    Json,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub source: CoefficientSource,
    /// `Covariate=Level`; repeat for each non-reference choice.
    #[arg(long = "set", value_name = "COV=LEVEL")]
    pub set: Vec<String>,
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = PredictFormat::Text)]
    pub format: PredictFormat,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub source: CoefficientSource,
    /// Table formats to write.
    #[arg(long, value_delimiter = ',', default_value = "text,csv,latex")]
    pub format: Vec<TableFormat>,
}

/// Contents of `model.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub confidence: f64,
    pub model: FittedModel,
    /// Empty when the fit did not converge.
    pub coefficients: Vec<CoefficientStat>,
    pub normalization: BTreeMap<String, NormalizationMap>,
}

/// Contents of `normalization.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NormalizationFile {
    pub anchor_fars: Vec<f64>,
    pub maps: BTreeMap<String, NormalizationMap>,
    pub dropped_anchors: DroppedAnchors,
}

/// Files to write under the output directory; nothing is written until every
/// target has been checked.
struct Outputs<'a> {
    dir: &'a Path,
    force: bool,
    files: Vec<(String, Vec<u8>)>,
}

impl<'a> Outputs<'a> {
    fn new(cli: &'a Cli) -> Self {
        Outputs {
            dir: &cli.output_dir,
            force: cli.force,
            files: Vec::new(),
        }
    }

    fn add(&mut self, name: impl Into<String>, bytes: impl Into<Vec<u8>>) {
        self.files.push((name.into(), bytes.into()));
    }

    /// Files whose current contents already match are left alone.
    fn commit(mut self) -> Result<Vec<PathBuf>> {
        let dir = self.dir;
        self.files
            .retain(|(n, bytes)| fs::read(dir.join(n)).map_or(true, |old| old != *bytes));
        let paths: Vec<PathBuf> = self.files.iter().map(|(n, _)| self.dir.join(n)).collect();
        if !self.force {
            if let Some(p) = paths.iter().find(|p| p.exists()) {
                return Err(CliError::Exists(p.clone()));
            }
        }
        fs::create_dir_all(self.dir).map_err(CliError::io(self.dir))?;
        for (path, (_, bytes)) in paths.iter().zip(self.files) {
            fs::write(path, bytes).map_err(CliError::io(path))?;
        }
        Ok(paths)
    }
}

/// File-name fragment for an algorithm name: `"System A"` -> `system_a`.
pub fn file_stem(name: &str) -> String {
    let mut out: String = name
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() {
                c.to_ascii_lowercase()
            } else {
                '_'
            }
        })
        .collect();
    while out.contains("__") {
        out = out.replace("__", "_");
    }
    out.trim_matches('_').to_string()
}

fn load_spec(path: Option<&Path>) -> Result<CovariateSpec> {
    let spec = match path {
        Some(p) => io::read_json(p)?,
        None => CovariateSpec::standard(),
    };
    spec.validate()?;
    Ok(spec)
}

fn warn_dropped(dropped: &DroppedAnchors) {
    for (alg, fars) in dropped {
        let list: Vec<String> = fars.iter().map(|f| format!("{f:e}")).collect();
        eprintln!(
            "warning: {alg}: too few impostor scores to resolve anchor FAR {}; anchor dropped",
            list.join(", ")
        );
    }
}

fn report_written(paths: &[PathBuf]) {
    for p in paths {
        eprintln!("wrote {}", p.display());
    }
}

fn simulate(cli: &Cli, args: &SimulateArgs) -> Result<()> {
    let mut config: SynthConfig = match &args.config {
        Some(p) => io::read_json(p)?,
        None => SynthConfig::published_shape(args.seed),
    };
    config.seed = args.seed;
    if let Some(n) = args.probes {
        config.n_probes = n;
    }
    if let Some(n) = args.impostors_per_algorithm {
        config.impostors_per_algorithm = n;
    }
    let spec = load_spec(args.spec.as_deref())?;
    let (table, truth) = generate(&config, &spec)?;
    let mut out = Outputs::new(cli);
    out.add("scores.csv", io::scores_csv(&table)?);
    out.add("ground_truth.json", io::to_json(&truth));
    report_written(&out.commit()?);
    println!("{} rows, {} probes", table.len(), table.probe_ids().len());
    Ok(())
}

fn roc_csv(table: &ScoreTable, map: &NormalizationMap) -> Result<Option<String>> {
    let rows = table.rows().iter().filter(|r| r.algorithm == map.algorithm);
    let (genuine, impostor): (Vec<_>, Vec<_>) = rows.partition(|r| r.is_genuine);
    if genuine.is_empty() {
        return Ok(None);
    }
    let g: Vec<f64> = genuine.iter().map(|r| r.raw_score).collect();
    let i: Vec<f64> = impostor.iter().map(|r| r.raw_score).collect();
    let grid: Vec<f64> = map.anchors.iter().map(|a| a.far).collect();
    Ok(Some(render_roc(&roc_curve(&g, &i, &grid)?)))
}

fn normalize(cli: &Cli, args: &NormalizeArgs) -> Result<()> {
    let input = args
        .input
        .clone()
        .unwrap_or_else(|| cli.output_dir.join("scores.csv"));
    let table = io::read_scores(&input)?;
    let options = args.anchors.options();
    let (normalized, dropped) = normalize_table_with(&table, &options)?;
    warn_dropped(&dropped);
    let mut out = Outputs::new(cli);
    out.add("normalized.csv", io::normalized_csv(&normalized)?);
    for map in normalized.maps.values() {
        let stem = file_stem(&map.algorithm);
        out.add(
            format!("normalization_fit_{stem}.csv"),
            render_normalization_fit(map),
        );
        if let Some(roc) = roc_csv(&table, map)? {
            out.add(format!("roc_{stem}.csv"), roc);
        }
    }
    let file = NormalizationFile {
        anchor_fars: options.anchor_fars,
        maps: normalized.maps.clone(),
        dropped_anchors: dropped,
    };
    out.add("normalization.json", io::to_json(&file));
    report_written(&out.commit()?);
    for map in normalized.maps.values() {
        println!(
            "{}: log10 FAR = {} * score + {} (rmse {:.4}, {} anchors)",
            map.algorithm,
            map.m,
            map.b,
            map.fit_rmse,
            map.anchors.len()
        );
    }
    Ok(())
}

/// Normalized table plus the drop log, with dropped probes removed.
fn prepare(cli: &Cli, args: &FitArgs) -> Result<(NormalizedTable, DropLog)> {
    let input = match &args.input {
        Some(p) => p.clone(),
        None => {
            let n = cli.output_dir.join("normalized.csv");
            if n.exists() {
                n
            } else {
                cli.output_dir.join("scores.csv")
            }
        }
    };
    let normalized = if io::is_normalized(&input)? {
        let maps_path = args.maps.clone().unwrap_or_else(|| {
            input
                .parent()
                .unwrap_or_else(|| Path::new("."))
                .join("normalization.json")
        });
        let file: NormalizationFile = io::read_json(&maps_path)?;
        io::read_normalized(&input, file.maps)?
    } else {
        let table = io::read_scores(&input)?;
        let (normalized, dropped) = normalize_table_with(&table, &args.anchors.options())?;
        warn_dropped(&dropped);
        normalized
    };
    let rows = normalized.rows.iter().map(|r| r.row.clone()).collect();
    let table = ScoreTable::new(rows, Default::default())?;
    let (_, log) = apply_drop_rules(&table);
    Ok((normalized.without_dropped(&log), log))
}

fn fit(cli: &Cli, args: &FitArgs) -> Result<()> {
    let spec = load_spec(args.spec.as_deref())?;
    let (kept, log) = prepare(cli, args)?;
    let design = build_design(&kept, &spec)?;
    let model = fit_reml(&design)?;
    let coefficients = if model.converged {
        wald_stats(&model, args.confidence)?
    } else {
        Vec::new()
    };
    let file = ModelFile {
        confidence: args.confidence,
        model,
        coefficients,
        normalization: kept.maps,
    };
    let mut out = Outputs::new(cli);
    out.add("model.json", io::to_json(&file));
    out.add("drop_log.json", io::to_json(&log));
    report_written(&out.commit()?);
    println!(
        "dropped {} probes with missing weather and {} with unspecified sex; {} retained",
        log.dropped_missing_weather, log.dropped_unspecified_sex, log.retained
    );
    let m = &file.model;
    println!(
        "{} observations in {} groups; group variance {:.4}, scale {:.4}, REML log-likelihood {:.4}",
        m.n_observations, m.n_groups, m.group_variance, m.scale, m.reml_loglik
    );
    for name in &m.dropped_columns {
        println!("dropped collinear column {name}");
    }
    if m.converged {
        Ok(())
    } else {
        Err(CliError::NotConverged)
    }
}

struct Coefficients {
    stats: Vec<CoefficientStat>,
    group_variance: Option<f64>,
    summary: ModelSummary,
    maps: BTreeMap<String, NormalizationMap>,
}

fn load_coefficients(cli: &Cli, source: &CoefficientSource) -> Result<Coefficients> {
    if source.paper_coefficients {
        return Ok(Coefficients {
            stats: load_paper_coefficients(),
            group_variance: Some(PUBLISHED_GROUP_VARIANCE),
            summary: published_summary(),
            maps: BTreeMap::new(),
        });
    }
    let path = source
        .input
        .clone()
        .unwrap_or_else(|| cli.output_dir.join("model.json"));
    let file: ModelFile = io::read_json(&path)?;
    Ok(Coefficients {
        group_variance: Some(file.model.group_variance),
        summary: ModelSummary::from(&file.model),
        stats: file.coefficients,
        maps: file.normalization,
    })
}

fn predict(cli: &Cli, args: &PredictArgs) -> Result<()> {
    let spec = load_spec(args.spec.as_deref())?;
    let coeffs = load_coefficients(cli, &args.source)?;
    if !coeffs.summary.converged {
        return Err(CliError::NotConverged);
    }
    let mut scenario = Scenario::new();
    for s in &args.set {
        let (c, l) = Scenario::parse_assignment(s)?;
        scenario = scenario.with(&c, &l);
    }
    let est = predict_far(&coeffs.stats, &spec, &scenario)?;
    match args.format {
        PredictFormat::Json => {
            #[derive(Serialize)]
            struct Out<'a> {
                s: f64,
                far: f64,
                one_in_n: u64,
                terms: &'a [covfar_core::prediction::Term],
                caveat: &'a str,
            }
            let out = Out {
                s: est.s,
                far: est.far,
                one_in_n: est.one_in_n,
                terms: &est.terms,
                caveat: TAR_CAVEAT,
            };
            print!("{}", String::from_utf8_lossy(&io::to_json(&out)));
        }
        PredictFormat::Text => {
            let width = est
                .terms
                .iter()
                .map(|t| t.covariate.len() + t.level.len())
                .max()
                .unwrap_or(0)
                + 3;
            for t in &est.terms {
                let label = if t.level.is_empty() {
                    t.covariate.clone()
                } else {
                    format!("{} = {}", t.covariate, t.level)
                };
                println!("{label:<width$} {:>8.3}", t.coef);
            }
            println!("{:<width$} {:>8.3}", "log10 FAR", est.s);
            println!("FAR {:.3e} ({})", est.far, est.one_in_n_text());
            println!("{TAR_CAVEAT}");
        }
    }
    Ok(())
}

fn report(cli: &Cli, args: &ReportArgs) -> Result<()> {
    let coeffs = load_coefficients(cli, &args.source)?;
    let mut out = Outputs::new(cli);
    let summary_formats = args
        .format
        .iter()
        .filter(|f| !matches!(f, TableFormat::Latex));
    for &f in summary_formats {
        out.add(
            format!("summary.{}", f.extension()),
            render_model_summary(&coeffs.summary, f),
        );
    }
    if args.format.contains(&TableFormat::Latex) {
        out.add(
            "summary.tex",
            render_model_summary(&coeffs.summary, TableFormat::Latex),
        );
    }
    for map in coeffs.maps.values() {
        out.add(
            format!("normalization_fit_{}.csv", file_stem(&map.algorithm)),
            render_normalization_fit(map),
        );
    }
    if !coeffs.summary.converged {
        report_written(&out.commit()?);
        eprintln!("model did not converge; coefficient tables not written");
        return Err(CliError::NotConverged);
    }
    for &f in &args.format {
        out.add(
            format!("coefficients.{}", f.extension()),
            render_coefficient_table(&coeffs.stats, coeffs.group_variance, f),
        );
    }
    let forest = render_forest(&coeffs.stats);
    out.add("forest.svg", forest.svg);
    out.add("forest.csv", forest.csv);
    report_written(&out.commit()?);
    Ok(())
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate(a) => simulate(cli, a),
        Command::Normalize(a) => normalize(cli, a),
        Command::Fit(a) => fit(cli, a),
        Command::Predict(a) => predict(cli, a),
        Command::Report(a) => report(cli, a),
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main() -> i32 {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
