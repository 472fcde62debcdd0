//! Coefficient tables, model summaries, forest plots and diagnostic series.
//!
//! Numbers are printed to three decimals. Coefficients with magnitude of at
//! least 0.5 are bolded in text and LaTeX output.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::lmm::{CoefficientStat, FittedModel};
use crate::metrics::RocPoint;
use crate::normalization::NormalizationMap;

pub const BOLD_THRESHOLD: f64 = 0.5;
pub const COEFFICIENT_CSV_HEADER: &str = "cov_name,level,coef,ci_low,ci_high,p_value,num_probes";
pub const FOREST_CSV_HEADER: &str = "cov_name,level,coef,ci_low,ci_high";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableFormat {
    Text,
    Csv,
    Latex,
}

impl TableFormat {
    pub fn extension(self) -> &'static str {
        match self {
            TableFormat::Text => "txt",
            TableFormat::Csv => "csv",
            TableFormat::Latex => "tex",
        }
    }
}

impl FromStr for TableFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.trim().to_ascii_lowercase().as_str() {
            "text" | "txt" => Ok(TableFormat::Text),
            "csv" => Ok(TableFormat::Csv),
            "latex" | "tex" => Ok(TableFormat::Latex),
            other => Err(Error::InvalidConfig(format!("unknown format {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub model: String,
    pub dependent_variable: String,
    pub n_observations: usize,
    pub method: String,
    pub n_groups: usize,
    pub scale: f64,
    pub min_group_size: usize,
    pub max_group_size: usize,
    pub mean_group_size: f64,
    pub log_likelihood: f64,
    pub converged: bool,
}

impl From<&FittedModel> for ModelSummary {
    fn from(m: &FittedModel) -> Self {
        ModelSummary {
            model: "MixedLM".into(),
            dependent_variable: "est far".into(),
            n_observations: m.n_observations,
            method: "REML".into(),
            n_groups: m.n_groups,
            scale: m.scale,
            min_group_size: m.group_sizes.min,
            max_group_size: m.group_sizes.max,
            mean_group_size: m.group_sizes.mean,
            log_likelihood: m.reml_loglik,
            converged: m.converged,
        }
    }
}

pub fn fmt3(x: f64) -> String {
    format!("{x:.3}")
}

/// Three decimals, with anything below 0.0005 shown as `0.000`.
pub fn fmt_p(p: f64) -> String {
    if p < 0.0005 {
        "0.000".into()
    } else {
        fmt3(p)
    }
}

fn opt3(x: Option<f64>) -> String {
    x.map(fmt3).unwrap_or_default()
}

fn count(n: Option<u64>) -> String {
    n.map(|n| format!("{n}")).unwrap_or_else(|| "-".into())
}

/// Printed cells of one table row: name, level, coef, ci low, ci high, p, count.
fn cells(s: &CoefficientStat) -> [String; 7] {
    if s.reference {
        return [
            s.cov_name.clone(),
            s.level.clone(),
            "0.000000".into(),
            "0".into(),
            "0".into(),
            "-".into(),
            count(s.num_probes),
        ];
    }
    [
        s.cov_name.clone(),
        s.level.clone(),
        fmt3(s.coef),
        opt3(s.ci_low),
        opt3(s.ci_high),
        s.p_value.map(fmt_p).unwrap_or_else(|| "-".into()),
        count(s.num_probes),
    ]
}

fn group_var_cells(v: f64) -> [String; 7] {
    [
        "Group Var".into(),
        "-".into(),
        fmt3(v),
        String::new(),
        String::new(),
        String::new(),
        "-".into(),
    ]
}

fn is_bold(s: &CoefficientStat) -> bool {
    !s.reference && !s.is_intercept() && libm::fabs(s.coef) >= BOLD_THRESHOLD
}

const HEADER: [&str; 7] = [
    "Cov.Name",
    "Level",
    "Coef.",
    "[0.025",
    "0.975]",
    "P>|z|",
    "Num.Probes",
];

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.into()
    }
}

fn csv_line(out: &mut String, cells: &[String]) {
    let line: Vec<String> = cells.iter().map(|c| csv_field(c)).collect();
    out.push_str(&line.join(","));
    out.push('\n');
}

fn latex_line(out: &mut String, cells: &[String]) {
    out.push_str(&cells.join(" & "));
    out.push_str(" \\\\\n");
}

fn text_table(out: &mut String, rows: &[Vec<String>]) {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|j| {
            rows.iter()
                .filter_map(|r| r.get(j))
                .map(|c| c.chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    for r in rows {
        let mut line = String::new();
        for (j, c) in r.iter().enumerate() {
            if j > 0 {
                line.push_str("  ");
            }
            let pad = widths[j] - c.chars().count();
            line.push_str(c);
            line.extend(core::iter::repeat_n(' ', pad));
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
}

/// Coefficient table in the published layout. `group_variance`, when given,
/// adds the trailing `Group Var` row.
pub fn render_coefficient_table(
    stats: &[CoefficientStat],
    group_variance: Option<f64>,
    format: TableFormat,
) -> String {
    let mut out = String::new();
    match format {
        TableFormat::Csv => {
            out.push_str(COEFFICIENT_CSV_HEADER);
            out.push('\n');
            for s in stats {
                let mut c = cells(s);
                if s.reference {
                    c[2] = fmt3(0.0);
                    c[3].clear();
                    c[4].clear();
                    c[5].clear();
                }
                csv_line(&mut out, &c);
            }
            if let Some(v) = group_variance {
                csv_line(&mut out, &group_var_cells(v));
            }
        }
        TableFormat::Latex => {
            out.push_str("\\begin{tabular}{lllllll}\n\\hline\n");
            latex_line(&mut out, &HEADER.map(String::from));
            out.push_str("\\hline\n");
            for s in stats {
                let mut c = cells(s);
                if is_bold(s) {
                    c[2] = format!("\\textbf{{{}}}", c[2]);
                }
                latex_line(&mut out, &c);
            }
            if let Some(v) = group_variance {
                latex_line(&mut out, &group_var_cells(v));
            }
            out.push_str("\\hline\n\\end{tabular}\n");
        }
        TableFormat::Text => {
            let mut rows: Vec<Vec<String>> = Vec::with_capacity(stats.len() + 2);
            rows.push(HEADER.iter().map(|h| String::from(*h)).collect());
            for s in stats {
                let mut c = cells(s);
                if is_bold(s) {
                    c[2] = format!("*{}*", c[2]);
                }
                rows.push(c.to_vec());
            }
            if let Some(v) = group_variance {
                rows.push(group_var_cells(v).to_vec());
            }
            text_table(&mut out, &rows);
        }
    }
    out
}

fn summary_grid(m: &ModelSummary) -> [[String; 4]; 6] {
    let s = String::from;
    [
        [
            s("Model:"),
            m.model.clone(),
            s("Dependent Variable:"),
            m.dependent_variable.clone(),
        ],
        [
            s("No. Observations"),
            format!("{}", m.n_observations),
            s("Method"),
            m.method.clone(),
        ],
        [
            s("No. Groups:"),
            format!("{}", m.n_groups),
            s("Scale:"),
            format!("{:.4}", m.scale),
        ],
        [
            s("Min. group size:"),
            format!("{}", m.min_group_size),
            s("Log-Likelihood:"),
            format!("{:.4}", m.log_likelihood),
        ],
        [
            s("Max. group size:"),
            format!("{}", m.max_group_size),
            s("Converged:"),
            s(if m.converged { "Yes" } else { "No" }),
        ],
        [
            s("Mean group size:"),
            format!("{:.1}", m.mean_group_size),
            String::new(),
            String::new(),
        ],
    ]
}

pub fn render_model_summary(m: &ModelSummary, format: TableFormat) -> String {
    let grid = summary_grid(m);
    let mut out = String::new();
    match format {
        TableFormat::Csv => {
            out.push_str("field,value\n");
            for row in &grid {
                for pair in row.chunks(2) {
                    if !pair[0].is_empty() {
                        let key = pair[0].trim_end_matches(':');
                        csv_line(&mut out, &[key.into(), pair[1].clone()]);
                    }
                }
            }
        }
        TableFormat::Latex => {
            out.push_str("\\begin{tabular}{lllll}\n\\hline\n");
            out.push_str(" & 0 & 1 & 2 & 3 \\\\\n\\hline\n");
            for (i, row) in grid.iter().enumerate() {
                let mut c = Vec::with_capacity(5);
                c.push(format!("{i}"));
                c.extend(row.iter().cloned());
                latex_line(&mut out, &c);
            }
            out.push_str("\\hline\n\\end{tabular}\n");
        }
        TableFormat::Text => {
            let rows: Vec<Vec<String>> = grid.iter().map(|r| r.to_vec()).collect();
            text_table(&mut out, &rows);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForestPlot {
    pub svg: String,
    pub csv: String,
}

fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            c => out.push(c),
        }
    }
    out
}

fn fmt6(x: f64) -> String {
    format!("{x:.6}")
}

/// One row per non-reference level with an interval: a point at the
/// coefficient and a whisker across the interval, plus a CSV of the same
/// values.
pub fn render_forest(stats: &[CoefficientStat]) -> ForestPlot {
    let rows: Vec<(&CoefficientStat, f64, f64)> = stats
        .iter()
        .filter(|s| !s.reference && !s.is_intercept())
        .filter_map(|s| Some((s, s.ci_low?, s.ci_high?)))
        .collect();

    let mut csv = String::from(FOREST_CSV_HEADER);
    csv.push('\n');
    for (s, lo, hi) in &rows {
        csv_line(
            &mut csv,
            &[
                s.cov_name.clone(),
                s.level.clone(),
                fmt6(s.coef),
                fmt6(*lo),
                fmt6(*hi),
            ],
        );
    }

    let (mut lo_x, mut hi_x) = (0.0f64, 0.0f64);
    for (s, lo, hi) in &rows {
        lo_x = lo_x.min(*lo).min(s.coef);
        hi_x = hi_x.max(*hi).max(s.coef);
    }
    if hi_x - lo_x < 1e-12 {
        lo_x -= 1.0;
        hi_x += 1.0;
    }
    let pad = 0.05 * (hi_x - lo_x);
    let (lo_x, hi_x) = (lo_x - pad, hi_x + pad);

    const LABEL_W: f64 = 280.0;
    const PLOT_W: f64 = 480.0;
    const ROW_H: f64 = 22.0;
    const TOP: f64 = 30.0;
    let width = LABEL_W + PLOT_W + 20.0;
    let height = TOP + ROW_H * rows.len() as f64 + 40.0;
    let px = |v: f64| LABEL_W + (v - lo_x) / (hi_x - lo_x) * PLOT_W;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" viewBox=\"0 0 {width:.0} {height:.0}\" font-family=\"sans-serif\" font-size=\"12\">"
    );
    let _ = writeln!(svg, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
    let zero = px(0.0);
    let bottom = TOP + ROW_H * rows.len() as f64;
    let _ = writeln!(
        svg,
        "<line x1=\"{zero:.2}\" y1=\"{:.2}\" x2=\"{zero:.2}\" y2=\"{bottom:.2}\" stroke=\"#888\" stroke-dasharray=\"4 3\"/>",
        TOP - 10.0
    );
    for (i, (s, lo, hi)) in rows.iter().enumerate() {
        let y = TOP + ROW_H * (i as f64 + 0.5);
        let label = xml_escape(&format!("{} {}", s.cov_name, s.level));
        let _ = writeln!(
            svg,
            "<g class=\"row\" data-cov=\"{}\" data-level=\"{}\" data-coef=\"{}\" data-ci-low=\"{}\" data-ci-high=\"{}\">",
            xml_escape(&s.cov_name),
            xml_escape(&s.level),
            fmt6(s.coef),
            fmt6(*lo),
            fmt6(*hi)
        );
        let _ = writeln!(
            svg,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{label}</text>",
            LABEL_W - 8.0,
            y + 4.0
        );
        let _ = writeln!(
            svg,
            "<line x1=\"{:.2}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"black\"/>",
            px(*lo),
            px(*hi)
        );
        let fill = if is_bold(s) { "#c0392b" } else { "#2c3e50" };
        let _ = writeln!(
            svg,
            "<circle cx=\"{:.2}\" cy=\"{y:.2}\" r=\"4\" fill=\"{fill}\"/>",
            px(s.coef)
        );
        svg.push_str("</g>\n");
    }
    let axis_y = bottom + 10.0;
    let _ = writeln!(
        svg,
        "<line x1=\"{LABEL_W:.2}\" y1=\"{axis_y:.2}\" x2=\"{:.2}\" y2=\"{axis_y:.2}\" stroke=\"black\"/>",
        LABEL_W + PLOT_W
    );
    for k in 0..=4 {
        let v = lo_x + (hi_x - lo_x) * k as f64 / 4.0;
        let _ = writeln!(
            svg,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>",
            px(v),
            axis_y + 16.0,
            fmt3(v)
        );
    }
    svg.push_str("</svg>\n");
    ForestPlot { svg, csv }
}

/// Anchor points of a tail map with the fitted line and residuals.
pub fn render_normalization_fit(map: &NormalizationMap) -> String {
    let mut out = String::from("anchor_far,anchor_score,log10_far,fitted_log10_far,residual\n");
    for a in &map.anchors {
        let target = libm::log10(a.far);
        let fitted = map.m * a.score + map.b;
        let _ = writeln!(
            out,
            "{:e},{},{},{},{}",
            a.far,
            a.score,
            target,
            fitted,
            target - fitted
        );
    }
    out
}

pub fn render_roc(points: &[RocPoint]) -> String {
    let mut out = String::from("target_far,threshold,far,tar\n");
    for p in points {
        let _ = writeln!(
            out,
            "{:e},{},{},{}",
            p.target_far, p.threshold, p.far, p.tar
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixture::{load_paper_coefficients, published_summary, PUBLISHED_GROUP_VARIANCE};

    #[test]
    fn p_formatting() {
        assert_eq!(fmt_p(0.0004), "0.000");
        assert_eq!(fmt_p(0.0389), "0.039");
        assert_eq!(fmt_p(1.0), "1.000");
    }

    #[test]
    fn latex_rows_match_published_layout() {
        let tex = render_coefficient_table(
            &load_paper_coefficients(),
            Some(PUBLISHED_GROUP_VARIANCE),
            TableFormat::Latex,
        );
        assert!(
            tex.contains("Cov.Name & Level & Coef. & [0.025 & 0.975] & P>|z| & Num.Probes \\\\\n")
        );
        assert!(tex.contains("Algorithm & System A & 0.000000 & 0 & 0 & - & 8245 \\\\\n"));
        assert!(tex.contains("Group Var & - & 1.157 &  &  &  & - \\\\\n"));
        assert!(tex.contains("Intercept & - & -7.003 & -7.340 & -6.666 & 0.000 & - \\\\\n"));
        assert!(tex.contains(
            "Camera Location & Uav & \\textbf{0.999} & -0.122 & 2.120 & 0.081 & 917 \\\\\n"
        ));
        assert!(tex.contains("Algorithm & System D & \\textbf{0.692}"));
        assert!(tex.contains("Algorithm & System C & 0.447 &"));
    }

    #[test]
    fn csv_header_and_rows() {
        let csv = render_coefficient_table(&load_paper_coefficients(), None, TableFormat::Csv);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(COEFFICIENT_CSV_HEADER));
        assert_eq!(
            lines.next(),
            Some("Intercept,-,-7.003,-7.340,-6.666,0.000,-")
        );
        assert_eq!(lines.next(), Some("Algorithm,System A,0.000,,,,8245"));
        assert_eq!(csv.lines().count(), 39);
    }

    #[test]
    fn intercept_only_table() {
        let s = CoefficientStat::wald("Intercept", "-", 1.0, 0.1, 0.95).unwrap();
        let csv = render_coefficient_table(&[s], None, TableFormat::Csv);
        assert_eq!(csv.lines().count(), 2);
    }

    #[test]
    fn summary_grid_matches_published() {
        let tex = render_model_summary(&published_summary(), TableFormat::Latex);
        for line in [
            "0 & Model: & MixedLM & Dependent Variable: & est far \\\\",
            "1 & No. Observations & 41119 & Method & REML \\\\",
            "2 & No. Groups: & 55 & Scale: & 4.3539 \\\\",
            "3 & Min. group size: & 30 & Log-Likelihood: & -88768.7911 \\\\",
            "4 & Max. group size: & 3185 & Converged: & Yes \\\\",
            "5 & Mean group size: & 747.6 &  &  \\\\",
        ] {
            assert!(tex.lines().any(|l| l == line), "{line}");
        }
        let unconverged = ModelSummary {
            converged: false,
            ..published_summary()
        };
        let text = render_model_summary(&unconverged, TableFormat::Text);
        assert!(text
            .lines()
            .any(|l| l.contains("Converged:") && l.trim_end().ends_with("No")));
    }

    #[test]
    fn forest_rows() {
        let plot = render_forest(&load_paper_coefficients());
        assert_eq!(plot.csv.lines().count(), 29);
        assert_eq!(plot.svg.matches("<circle").count(), 28);
        assert!(plot.svg.contains("data-level=\"&lt;30 Pix\""));
        assert!(plot
            .csv
            .contains("Camera Location,Uav,0.999000,-0.122000,2.120000"));

        let one = CoefficientStat::wald("X", "a", 0.3, 0.1, 0.95).unwrap();
        let plot = render_forest(&[one]);
        assert_eq!(plot.svg.matches("<circle").count(), 1);
        assert!(plot.svg.starts_with("<svg") && plot.svg.trim_end().ends_with("</svg>"));
    }
}
