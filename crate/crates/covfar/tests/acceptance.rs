//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::process::Command;
use std::time::{Duration, Instant};

use covfar_core::covariates::{CovariateSpec, DesignMatrix, Scenario};
use covfar_core::fixture::{load_paper_coefficients, published_summary, PUBLISHED_GROUP_VARIANCE};
use covfar_core::lmm::{fit_reml, se_from_interval, CoefficientStat};
use covfar_core::metrics::{roc_curve, RocPoint, SortedScores};
use covfar_core::normalization::{fit_tail_map, DEFAULT_ANCHOR_FARS};
use covfar_core::prediction::predict_far;
use covfar_core::report::{render_coefficient_table, render_model_summary, TableFormat};
use covfar_core::synthetic::{
    generate_design, sample_tail_scores, AlgorithmTail, DesignSynthConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const C1_ALL_REFERENCE: u64 = 10_023_052;
const C1_WORKED: u64 = 1_469;
const C1_MAX_TIME: Duration = Duration::from_secs(1);

const C2_P_TOL: f64 = 0.005;
const C2_MAX_TIME: Duration = Duration::from_secs(1);

const C3_REL_TOL: f64 = 1e-6;
const C3_MAX_TIME: Duration = Duration::from_secs(1);

const C4_SEEDS: u64 = 20;
const C4_WITHIN_3SE: f64 = 0.95;
const C4_COVERAGE: (f64, f64) = (0.90, 0.99);
const C4_Z95: f64 = 1.959_963_984_540_054;
const C4_MAX_TIME: Duration = Duration::from_secs(120);

const C5_IMPOSTORS: usize = 10_000_000;
const C5_HELD_OUT: usize = 20;
const C5_RATIO: f64 = 2.0;
const C5_AFFINE_TOL: f64 = 1e-9;
const C5_MAX_TIME: Duration = Duration::from_secs(60);

const C6_TABLES: u64 = 50;
const C6_MAX_SCORES: usize = 1000;
const C6_MAX_TIME: Duration = Duration::from_secs(30);

struct Outcome {
    pass: bool,
    detail: String,
}

fn verdict(id: &str, name: &str, o: Outcome, elapsed: Duration, limit: Option<Duration>) -> bool {
    let in_time = limit.is_none_or(|l| elapsed <= l);
    let pass = o.pass && in_time;
    let time = match limit {
        Some(l) => format!("{:.2}s (limit {}s)", elapsed.as_secs_f64(), l.as_secs()),
        None => format!("{:.2}s", elapsed.as_secs_f64()),
    };
    println!(
        "{id} {} {name}: {}; {time}",
        if pass { "PASS" } else { "FAIL" },
        o.detail
    );
    pass
}

fn timed(f: impl FnOnce() -> Outcome) -> (Outcome, Duration) {
    let t = Instant::now();
    let o = f();
    (o, t.elapsed())
}

// ---- 1: FAR arithmetic -----------------------------------------------------

fn cli_one_in_n(sets: &[&str]) -> Result<u64, String> {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_covfar"));
    cmd.args([
        "--output-dir",
        std::env::temp_dir().to_str().unwrap(),
        "predict",
        "--paper-coefficients",
    ]);
    for s in sets {
        cmd.args(["--set", s]);
    }
    let out = cmd.output().map_err(|e| e.to_string())?;
    let text = String::from_utf8_lossy(&out.stdout);
    let line = text
        .lines()
        .find_map(|l| l.split("1 in ").nth(1))
        .ok_or_else(|| format!("no '1 in' line in {text:?}"))?;
    let digits: String = line
        .chars()
        .take_while(|c| c.is_ascii_digit() || *c == ',')
        .filter(|c| *c != ',')
        .collect();
    digits.parse().map_err(|_| format!("cannot parse {line:?}"))
}

fn c1() -> Outcome {
    let spec = CovariateSpec::standard();
    let coeffs = load_paper_coefficients();
    let worked = ["Head Hgt=<30 Pix", "Camera Loc=Long Range"];
    let mut detail = Vec::new();
    let mut pass = true;
    for (label, sets, want) in [
        ("all-reference", &[][..], C1_ALL_REFERENCE),
        ("worked", &worked[..], C1_WORKED),
    ] {
        let mut scenario = Scenario::new();
        for s in sets {
            let (c, l) = Scenario::parse_assignment(s).unwrap();
            scenario = scenario.with(&c, &l);
        }
        let lib = predict_far(&coeffs, &spec, &scenario).map(|e| e.one_in_n);
        let cli = cli_one_in_n(sets);
        let ok = lib == Ok(want) && cli == Ok(want);
        pass &= ok;
        detail.push(format!(
            "{label} expected 1 in {want}, library {lib:?}, cli {cli:?}"
        ));
    }
    Outcome {
        pass,
        detail: detail.join("; "),
    }
}

// ---- 2: Wald p-values from the printed intervals ---------------------------

fn c2() -> Outcome {
    let coeffs = load_paper_coefficients();
    let mut pass = true;
    let mut detail = Vec::new();
    for (cov, level, printed) in [
        ("Wind Speed", "9-12 M/S", 0.039),
        ("Temperature", "0-10 C", 0.007),
        ("Camera Location", "Uav", 0.081),
    ] {
        let row = coeffs
            .iter()
            .find(|c| c.cov_name == cov && c.level == level)
            .expect("fixture row");
        let se = se_from_interval(row.ci_low.unwrap(), row.ci_high.unwrap(), 0.95).unwrap();
        let p = CoefficientStat::wald(cov, level, row.coef, se, 0.95)
            .unwrap()
            .p_value
            .unwrap();
        pass &= (p - printed).abs() <= C2_P_TOL;
        detail.push(format!("{level} p={p:.4} (printed {printed})"));
    }
    Outcome {
        pass,
        detail: detail.join(", "),
    }
}

// ---- 3: REML against closed-form ANOVA -------------------------------------

fn c3() -> Outcome {
    let (g, n) = (10usize, 20usize);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut y = Vec::new();
    let mut groups = Vec::new();
    for i in 0..g {
        let u: f64 = Distribution::<f64>::sample(&StandardNormal, &mut rng);
        for _ in 0..n {
            let e: f64 = Distribution::<f64>::sample(&StandardNormal, &mut rng);
            y.push(5.0 + u + 2.0 * e);
            groups.push(format!("g{i}"));
        }
    }
    let empty = CovariateSpec {
        covariates: Vec::new(),
        grouping: Default::default(),
    };
    let d =
        DesignMatrix::from_levels(&empty, &vec![Vec::new(); y.len()], y.clone(), groups).unwrap();
    let m = fit_reml(&d).unwrap();

    let means: Vec<f64> = (0..g)
        .map(|i| y[i * n..(i + 1) * n].iter().sum::<f64>() / n as f64)
        .collect();
    let grand = means.iter().sum::<f64>() / g as f64;
    let msb = means
        .iter()
        .map(|m| n as f64 * (m - grand).powi(2))
        .sum::<f64>()
        / (g - 1) as f64;
    let msw = (0..g)
        .map(|i| {
            y[i * n..(i + 1) * n]
                .iter()
                .map(|v| (v - means[i]).powi(2))
                .sum::<f64>()
        })
        .sum::<f64>()
        / (g * (n - 1)) as f64;
    let (s2, su2) = (msw, (msb - msw) / n as f64);
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs();
    let errs = [
        rel(m.scale, s2),
        rel(m.group_variance, su2),
        rel(m.coefficients[0], grand),
    ];
    Outcome {
        pass: msb > msw && m.converged && errs.iter().all(|e| *e <= C3_REL_TOL),
        detail: format!(
            "sigma2 {:.6} vs {s2:.6}, sigma_u2 {:.6} vs {su2:.6}, mean {:.6} vs {grand:.6}, max rel err {:.1e}",
            m.scale,
            m.group_variance,
            m.coefficients[0],
            errs.iter().cloned().fold(0.0, f64::max)
        ),
    }
}

// ---- 4: coefficient recovery ------------------------------------------------

fn c4() -> Outcome {
    let spec = CovariateSpec::standard();
    let (mut pairs, mut within3, mut covered) = (0usize, 0usize, 0usize);
    for seed in 0..C4_SEEDS {
        let (design, beta) = generate_design(&DesignSynthConfig::standard(seed), &spec).unwrap();
        let m = fit_reml(&design).unwrap();
        if !m.converged {
            return Outcome {
                pass: false,
                detail: format!("seed {seed} did not converge"),
            };
        }
        for (col, truth) in design.column_names().iter().zip(&beta) {
            let Some(k) = m.column_names().iter().position(|c| c == col) else {
                continue;
            };
            let err = (m.coefficients[k] - truth).abs();
            let se = m.standard_errors[k];
            pairs += 1;
            within3 += usize::from(err <= 3.0 * se);
            covered += usize::from(err <= C4_Z95 * se);
        }
    }
    let f3 = within3 as f64 / pairs as f64;
    let cov = covered as f64 / pairs as f64;
    Outcome {
        pass: f3 >= C4_WITHIN_3SE && (C4_COVERAGE.0..=C4_COVERAGE.1).contains(&cov),
        detail: format!("{pairs} pairs, within 3 SE {f3:.4}, 95% CI coverage {cov:.4}"),
    }
}

// ---- 5: normalization fidelity ----------------------------------------------

fn c5() -> Outcome {
    let tail = AlgorithmTail::new("X", -0.9, 0.4);
    let raw = sample_tail_scores(&tail, C5_IMPOSTORS, 99);
    let map = fit_tail_map(&raw, "X", &DEFAULT_ANCHOR_FARS).unwrap();
    let sorted = SortedScores::new(&raw).unwrap();
    let mut worst: f64 = 1.0;
    for i in 0..C5_HELD_OUT {
        // midpoints of a log grid over [1e-4, 1e-2], away from the anchors
        let f = 10f64.powf(-4.0 + 2.0 * (i as f64 + 0.5) / C5_HELD_OUT as f64);
        let t = sorted.threshold_at_far(f).unwrap();
        let empirical = sorted.rate_at_or_above(t);
        let predicted = 10f64.powf(map.apply(t).est_log_far);
        worst = worst.max((predicted / empirical).max(empirical / predicted));
    }
    let mut affine: f64 = 0.0;
    let probes = [-2.0, 0.0, 3.5, 7.0];
    for (a, c) in [(3.7, -12.0), (0.02, 500.0), (250.0, 1.0)] {
        let moved: Vec<f64> = raw.iter().map(|s| a * s + c).collect();
        let m2 = fit_tail_map(&moved, "X", &DEFAULT_ANCHOR_FARS).unwrap();
        for p in probes {
            affine = affine.max((map.apply(p).est_log_far - m2.apply(a * p + c).est_log_far).abs());
        }
    }
    Outcome {
        pass: worst <= C5_RATIO && affine <= C5_AFFINE_TOL,
        detail: format!("worst FAR ratio {worst:.4} over {C5_HELD_OUT} thresholds, affine max diff {affine:.1e}"),
    }
}

// ---- 6: ROC against an exhaustive sweep -------------------------------------

/// k-th smallest value (0-based) by counting, O(N^2).
fn order_statistic(v: &[f64], k: usize) -> f64 {
    *v.iter()
        .find(|&&x| {
            let below = v.iter().filter(|&&y| y < x).count();
            let at_most = v.iter().filter(|&&y| y <= x).count();
            below <= k && k < at_most
        })
        .unwrap()
}

fn rate(v: &[f64], t: f64) -> f64 {
    v.iter().filter(|&&s| s >= t).count() as f64 / v.len() as f64
}

fn sweep(genuine: &[f64], impostor: &[f64], grid: &[f64]) -> Vec<RocPoint> {
    let n = impostor.len();
    grid.iter()
        .map(|&f| {
            let pos = (1.0 - f) * (n - 1) as f64;
            let k = pos.floor() as usize;
            let threshold = if k >= n - 1 {
                order_statistic(impostor, n - 1)
            } else {
                let (lo, hi) = (
                    order_statistic(impostor, k),
                    order_statistic(impostor, k + 1),
                );
                lo + (pos - k as f64) * (hi - lo)
            };
            RocPoint {
                target_far: f,
                threshold,
                far: rate(impostor, threshold),
                tar: rate(genuine, threshold),
            }
        })
        .collect()
}

fn c6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut mismatches = 0;
    let mut points = 0;
    for _ in 0..C6_TABLES {
        let n_imp = rng.random_range(2..=C6_MAX_SCORES - 1);
        let n_gen = rng.random_range(1..=C6_MAX_SCORES - n_imp);
        // coarse scores in half the tables so that ties occur
        let coarse = rng.random_bool(0.5);
        let draw = |rng: &mut ChaCha8Rng| {
            let x: f64 = Distribution::<f64>::sample(&StandardNormal, rng);
            if coarse {
                (x * 4.0).round() / 4.0
            } else {
                x
            }
        };
        let impostor: Vec<f64> = (0..n_imp).map(|_| draw(&mut rng)).collect();
        let genuine: Vec<f64> = (0..n_gen).map(|_| draw(&mut rng) + 1.5).collect();
        let min_far = 1.0 / n_imp as f64;
        let mut grid: Vec<f64> = (0..8)
            .map(|_| min_far + rng.random::<f64>() * (0.999 - min_far))
            .collect();
        grid.sort_by(f64::total_cmp);
        let got = roc_curve(&genuine, &impostor, &grid).unwrap();
        let want = sweep(&genuine, &impostor, &grid);
        points += want.len();
        mismatches += got.iter().zip(&want).filter(|(a, b)| a != b).count();
    }
    Outcome {
        pass: mismatches == 0,
        detail: format!("{C6_TABLES} tables, {points} points, {mismatches} mismatches"),
    }
}

// ---- 7: report fidelity -----------------------------------------------------

/// The published coefficient table body, verbatim.
const PUBLISHED_TABLE: &str = r"Intercept & - & -7.003 & -7.340 & -6.666 & 0.000 & - \\
Algorithm & System A & 0.000000 & 0 & 0 & - & 8245 \\
Algorithm & System B & 0.273 & 0.210 & 0.337 & 0.000 & 8213 \\
Algorithm & System C & 0.447 & 0.383 & 0.511 & 0.000 & 8230 \\
Algorithm & System D & 0.692 & 0.628 & 0.756 & 0.000 & 8237 \\
Algorithm & System E & 0.407 & 0.343 & 0.471 & 0.000 & 8194 \\
Has Gait & False & 0.000000 & 0 & 0 & - & 24804 \\
Has Gait & True & -0.283 & -0.332 & -0.233 & 0.000 & 0 \\
Has Turb. & False & 0.000000 & 0 & 0 & - & 27586 \\
Has Turb. & True & 0.057 & -0.012 & 0.127 & 0.104 & 0 \\
Head Height & >90 Pix & 0.000000 & 0 & 0 & - & 11388 \\
Head Height & 60-90 Pix & 0.480 & 0.384 & 0.576 & 0.000 & 3473 \\
Head Height & 50-60 Pix & 0.516 & 0.406 & 0.625 & 0.000 & 3293 \\
Head Height & 40-50 Pix & 0.673 & 0.576 & 0.771 & 0.000 & 7253 \\
Head Height & 30-40 Pix & 1.322 & 1.216 & 1.428 & 0.000 & 4581 \\
Head Height & <30 Pix & 1.884 & 1.730 & 2.038 & 0.000 & 1290 \\
Head Height & Restricted & 2.232 & 2.151 & 2.313 & 0.000 & 9841 \\
Modality & Face & 0.000000 & 0 & 0 & - & 10525 \\
Modality & Body & 0.742 & 0.642 & 0.842 & 0.000 & 30594 \\
Camera Location & Ctrl & 0.000000 & 0 & 0 & - & 7392 \\
Camera Location & Short Range & -0.344 & -0.489 & -0.200 & 0.000 & 2155 \\
Camera Location & Medium Range & 0.949 & 0.792 & 1.106 & 0.000 & 10472 \\
Camera Location & Long Range & 1.952 & 1.716 & 2.187 & 0.000 & 9673 \\
Camera Location & Elevated & 0.214 & 0.109 & 0.318 & 0.000 & 10510 \\
Camera Location & Uav & 0.999 & -0.122 & 2.120 & 0.081 & 917 \\
Solar Loading & 0-300 W/M$^2$ & 0.000000 & 0 & 0 & - & 19375 \\
Solar Loading & 300-600 W/M$^2$ & -0.199 & -0.266 & -0.132 & 0.000 & 7404 \\
Solar Loading & 600-900 W/M$^2$ & 0.511 & 0.434 & 0.588 & 0.000 & 7024 \\
Solar Loading & Above 900 W/M$^2$ & 0.868 & 0.791 & 0.945 & 0.000 & 7316 \\
Wind Speed & 0-3 M/S & 0.000000 & 0 & 0 & - & 25929 \\
Wind Speed & 3-6 M/S & -0.156 & -0.213 & -0.099 & 0.000 & 12453 \\
Wind Speed & 6-9 M/S & -0.043 & -0.145 & 0.059 & 0.412 & 2432 \\
Wind Speed & 9-12 M/S & 0.265 & 0.013 & 0.516 & 0.039 & 305 \\
Temperature & Below 0 C & 0.000000 & 0 & 0 & - & 4059 \\
Temperature & 0-10 C & 0.114 & 0.031 & 0.197 & 0.007 & 8327 \\
Temperature & 10-20 C & 0.333 & 0.185 & 0.481 & 0.000 & 8178 \\
Temperature & 20-30 C & -0.342 & -0.501 & -0.183 & 0.000 & 17684 \\
Temperature & 30-40 C & -0.143 & -0.329 & 0.043 & 0.132 & 2871 \\
Group Var & - & 1.157 &  &  &  & - \\";

const PUBLISHED_SUMMARY: [&str; 6] = [
    r"0 & Model: & MixedLM & Dependent Variable: & est far \\",
    r"1 & No. Observations & 41119 & Method & REML \\",
    r"2 & No. Groups: & 55 & Scale: & 4.3539 \\",
    r"3 & Min. group size: & 30 & Log-Likelihood: & -88768.7911 \\",
    r"4 & Max. group size: & 3185 & Converged: & Yes \\",
    r"5 & Mean group size: & 747.6 &  &  \\",
];

fn cells(line: &str) -> Vec<String> {
    line.trim()
        .trim_end_matches(r"\\")
        .split('&')
        .map(|c| {
            let c = c.trim();
            c.strip_prefix(r"\textbf{")
                .and_then(|c| c.strip_suffix('}'))
                .unwrap_or(c)
                .to_string()
        })
        .collect()
}

fn c7() -> Outcome {
    let tex = render_coefficient_table(
        &load_paper_coefficients(),
        Some(PUBLISHED_GROUP_VARIANCE),
        TableFormat::Latex,
    );
    let rendered: Vec<Vec<String>> = tex
        .lines()
        .filter(|l| l.contains('&'))
        .skip(1)
        .map(cells)
        .collect();
    let expected: Vec<Vec<String>> = PUBLISHED_TABLE.lines().map(cells).collect();
    let mut bad: Vec<String> = Vec::new();
    if rendered.len() != expected.len() {
        bad.push(format!(
            "{} rows rendered, {} published",
            rendered.len(),
            expected.len()
        ));
    }
    for (r, e) in rendered.iter().zip(&expected) {
        if r != e {
            bad.push(format!("{} {}", e[0], e[1]));
        }
    }
    let summary = render_model_summary(&published_summary(), TableFormat::Latex);
    let missing: Vec<&str> = PUBLISHED_SUMMARY
        .iter()
        .copied()
        .filter(|l| !summary.lines().any(|s| s.trim() == *l))
        .collect();
    Outcome {
        pass: bad.is_empty() && missing.is_empty(),
        detail: format!(
            "{} table rows compared, {} differ; {} of {} summary rows verbatim",
            expected.len(),
            bad.len(),
            PUBLISHED_SUMMARY.len() - missing.len(),
            PUBLISHED_SUMMARY.len()
        ),
    }
}

// ---- 8: declared scope ------------------------------------------------------

fn c8(covered: bool) -> Outcome {
    let s = published_summary();
    let fixture = s.scale == 4.3539 && s.log_likelihood == -88768.7911 && s.n_observations == 41119;
    Outcome {
        pass: fixture && covered,
        detail: format!(
            "fitted values need the restricted data set; carried as fixtures only (fixture intact: {fixture}, \
             criteria 3-5 and 7 pass: {covered})"
        ),
    }
}

fn main() {
    // `cargo test -- <filter>` passes extra arguments; only run on a plain invocation
    // or when the filter names this target.
    let args: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    if !args.is_empty() && !args.iter().any(|a| "acceptance".contains(a.as_str())) {
        return;
    }

    let mut results = Vec::new();
    let (o, t) = timed(c1);
    results.push(verdict("C1", "FAR arithmetic", o, t, Some(C1_MAX_TIME)));
    let (o, t) = timed(c2);
    results.push(verdict("C2", "Wald p-values", o, t, Some(C2_MAX_TIME)));
    let (o, t) = timed(c3);
    let p3 = verdict("C3", "REML vs ANOVA", o, t, Some(C3_MAX_TIME));
    let (o, t) = timed(c4);
    let p4 = verdict("C4", "coefficient recovery", o, t, Some(C4_MAX_TIME));
    let (o, t) = timed(c5);
    let p5 = verdict("C5", "normalization fidelity", o, t, Some(C5_MAX_TIME));
    let (o, t) = timed(c6);
    results.push(verdict(
        "C6",
        "ROC vs exhaustive sweep",
        o,
        t,
        Some(C6_MAX_TIME),
    ));
    let (o, t) = timed(c7);
    let p7 = verdict("C7", "report fidelity", o, t, None);
    let (o, t) = timed(|| c8(p3 && p4 && p5 && p7));
    results.push(verdict("C8", "declared scope", o, t, None));
    results.extend([p3, p4, p5, p7]);

    let failed = results.iter().filter(|p| !**p).count();
    println!(
        "acceptance: {} of {} criteria pass",
        results.len() - failed,
        results.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
