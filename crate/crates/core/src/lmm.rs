//! Random-intercept linear mixed model fitted by REML.
//!
//! The model is `y = X beta + Z u + e` with one intercept `u_g ~ N(0, s_u^2)`
//! per group and `e ~ N(0, s^2 I)`. Writing `theta = s_u^2 / s^2`, the
//! marginal covariance of group `g` is `s^2 (I + theta J)`, whose inverse is
//! `I - w_g J` with `w_g = theta / (1 + n_g theta)`. Because of that, every
//! quantity the restricted likelihood needs reduces to per-group sums
//! (`X_g' 1`, `1' y_g`) and the global cross products, which are accumulated
//! once. `beta` and `s^2` are profiled out in closed form (GLS), leaving a
//! one-dimensional search over `log theta`.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::covariates::{CovariateLayout, DesignColumn, DesignMatrix};
use crate::error::{Error, Result};
use crate::linalg::{dependent_columns, Cholesky};
use crate::stats::{normal_quantile, two_sided_p};

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    /// Drop collinear and empty columns instead of failing.
    pub drop_collinear: bool,
    pub max_iter: usize,
    /// Absolute tolerance on `log theta` for the likelihood-only fallback.
    pub tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            drop_collinear: true,
            max_iter: 200,
            tolerance: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupSizes {
    pub min: usize,
    pub max: usize,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub columns: Vec<DesignColumn>,
    pub coefficients: Vec<f64>,
    pub standard_errors: Vec<f64>,
    /// Between-group variance `s_u^2`.
    pub group_variance: f64,
    /// Residual variance `s^2`.
    pub scale: f64,
    pub theta: f64,
    pub reml_loglik: f64,
    pub converged: bool,
    pub iterations: usize,
    pub n_observations: usize,
    pub n_groups: usize,
    pub group_sizes: GroupSizes,
    /// Predicted random intercept per group, sorted by label.
    pub group_effects: Vec<(String, f64)>,
    pub dropped_columns: Vec<String>,
    pub layout: Vec<CovariateLayout>,
}

impl FittedModel {
    pub fn column_names(&self) -> Vec<String> {
        self.columns.iter().map(DesignColumn::name).collect()
    }

    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.columns
            .iter()
            .position(|c| c.name() == name)
            .map(|i| self.coefficients[i])
    }
}

struct GroupSums {
    label: String,
    n: usize,
    sx: Vec<f64>,
    sy: f64,
}

/// Sufficient statistics of the design restricted to the kept columns.
struct Prepared {
    n: usize,
    p: usize,
    xtx: Vec<f64>,
    xty: Vec<f64>,
    yty: f64,
    groups: Vec<GroupSums>,
    y_shift: f64,
    intercept: Option<usize>,
    kept: Vec<usize>,
    dropped: Vec<usize>,
}

struct Evaluation {
    loglik: f64,
    beta: Vec<f64>,
    sigma2: f64,
    chol: Cholesky,
}

fn gram(design: &DesignMatrix) -> Vec<f64> {
    let p = design.n_cols();
    let mut g = vec![0.0; p * p];
    for i in 0..design.n_rows() {
        let r = design.row(i);
        for a in 0..p {
            if r[a] == 0.0 {
                continue;
            }
            for b in 0..p {
                g[a * p + b] += r[a] * r[b];
            }
        }
    }
    g
}

impl Prepared {
    fn new(design: &DesignMatrix, drop_collinear: bool) -> Result<Prepared> {
        let n = design.n_rows();
        let p_all = design.n_cols();
        let dropped = dependent_columns(&gram(design), p_all, 1e-10);
        if !dropped.is_empty() && !drop_collinear {
            return Err(Error::RankDeficient {
                columns: dropped.iter().map(|&j| design.columns[j].name()).collect(),
            });
        }
        let kept: Vec<usize> = (0..p_all).filter(|j| !dropped.contains(j)).collect();
        let p = kept.len();
        if n <= p {
            return Err(Error::TooFewObservations { n, p });
        }

        let mut index: BTreeMap<&str, usize> = BTreeMap::new();
        for g in &design.groups {
            let next = index.len();
            index.entry(g.as_str()).or_insert(next);
        }
        if index.len() < 2 {
            return Err(Error::TooFewGroups(index.len()));
        }
        // groups in label order, independent of row order
        let mut order: Vec<(&str, usize)> = index.iter().map(|(k, v)| (*k, *v)).collect();
        order.sort_unstable();
        let mut slot = vec![0; order.len()];
        for (pos, (_, first_seen)) in order.iter().enumerate() {
            slot[*first_seen] = pos;
        }
        let mut groups: Vec<GroupSums> = order
            .iter()
            .map(|(label, _)| GroupSums {
                label: String::from(*label),
                n: 0,
                sx: vec![0.0; p],
                sy: 0.0,
            })
            .collect();

        let intercept = kept.iter().position(|&j| design.columns[j].is_intercept());
        let y_shift = if intercept.is_some() {
            design.y.iter().sum::<f64>() / n as f64
        } else {
            0.0
        };

        let mut xtx = vec![0.0; p * p];
        let mut xty = vec![0.0; p];
        let mut yty = 0.0;
        let mut xr = vec![0.0; p];
        for i in 0..n {
            let full = design.row(i);
            for (k, &j) in kept.iter().enumerate() {
                xr[k] = full[j];
            }
            let y = design.y[i] - y_shift;
            let g = &mut groups[slot[index[design.groups[i].as_str()]]];
            g.n += 1;
            g.sy += y;
            yty += y * y;
            for a in 0..p {
                if xr[a] == 0.0 {
                    continue;
                }
                g.sx[a] += xr[a];
                xty[a] += xr[a] * y;
                for b in 0..p {
                    xtx[a * p + b] += xr[a] * xr[b];
                }
            }
        }
        Ok(Prepared {
            n,
            p,
            xtx,
            xty,
            yty,
            groups,
            y_shift,
            intercept,
            kept,
            dropped,
        })
    }

    fn evaluate(&self, theta: f64) -> Result<Evaluation> {
        let p = self.p;
        let mut a = self.xtx.clone();
        let mut c = self.xty.clone();
        let mut q = self.yty;
        let mut log_det_h = 0.0;
        for g in &self.groups {
            let nt = g.n as f64 * theta;
            let w = theta / (1.0 + nt);
            log_det_h += libm::log1p(nt);
            q -= w * g.sy * g.sy;
            for i in 0..p {
                let wsi = w * g.sx[i];
                if wsi == 0.0 {
                    continue;
                }
                c[i] -= wsi * g.sy;
                for j in 0..p {
                    a[i * p + j] -= wsi * g.sx[j];
                }
            }
        }
        let chol = Cholesky::new(&a, p).ok_or(Error::NonFiniteLikelihood { theta })?;
        let beta = chol.solve(&c);
        let rss = q - c.iter().zip(&beta).map(|(x, y)| x * y).sum::<f64>();
        let df = (self.n - p) as f64;
        let sigma2 = rss / df;
        let loglik =
            -0.5 * (df * (libm::log(2.0 * PI * sigma2) + 1.0) + log_det_h + chol.log_det());
        if !(sigma2 > 0.0) || !loglik.is_finite() {
            return Err(Error::NonFiniteLikelihood { theta });
        }
        Ok(Evaluation {
            loglik,
            beta,
            sigma2,
            chol,
        })
    }
}

impl Prepared {
    /// Derivative of the profiled log-likelihood with respect to `log theta`.
    ///
    /// `d log|H| = sum n_g / (1 + n_g theta)`; `A` and the GLS residual
    /// quadratic form change through `dw_g = 1 / (1 + n_g theta)^2`, the latter
    /// at fixed `beta` since `beta` is optimal.
    fn score_log_theta(&self, theta: f64) -> Result<f64> {
        let e = self.evaluate(theta)?;
        let df = (self.n - self.p) as f64;
        let rss = e.sigma2 * df;
        let (mut d_rss, mut d_log_h, mut d_log_a) = (0.0, 0.0, 0.0);
        for g in &self.groups {
            let n = g.n as f64;
            let denom = 1.0 + n * theta;
            let dw = 1.0 / (denom * denom);
            d_log_h += n / denom;
            let r = g.sy - dot(&g.sx, &e.beta);
            d_rss -= dw * r * r;
            d_log_a -= dw * dot(&g.sx, &e.chol.solve(&g.sx));
        }
        Ok(-0.5 * theta * (df * d_rss / rss + d_log_h + d_log_a))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Root of a decreasing `f` on `[a, b]` with `f(a) > 0 > f(b)`, by
/// Illinois-modified false position.
fn falling_root<F>(
    f: &mut F,
    mut a: f64,
    mut b: f64,
    mut fa: f64,
    mut fb: f64,
    max_iter: usize,
) -> Result<(f64, usize, bool)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut side = 0i8;
    for iter in 0..max_iter {
        let x = (a * fb - b * fa) / (fb - fa);
        if libm::fabs(b - a) <= 1e-14 * (1.0 + libm::fabs(x)) {
            return Ok((x, iter, true));
        }
        let fx = f(x)?;
        if fx == 0.0 {
            return Ok((x, iter, true));
        }
        if fx > 0.0 {
            a = x;
            fa = fx;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        } else {
            b = x;
            fb = fx;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        }
    }
    Ok(((a * fb - b * fa) / (fb - fa), max_iter, false))
}

/// Restricted log-likelihood at `theta` with `beta` and `s^2` profiled out.
pub fn profiled_loglik(theta: f64, design: &DesignMatrix) -> Result<f64> {
    if !theta.is_finite() || theta < 0.0 {
        return Err(Error::InvalidTheta(theta));
    }
    Ok(Prepared::new(design, true)?.evaluate(theta)?.loglik)
}

pub fn fit_reml(design: &DesignMatrix) -> Result<FittedModel> {
    fit_reml_with(design, &FitOptions::default())
}

struct Search {
    theta: f64,
    iterations: usize,
    converged: bool,
}

const GRID_LO: i32 = -20;
const GRID_HI: i32 = 20;
const EXPAND_LIMIT: f64 = 100.0;

/// Maximizes the profiled likelihood over `t = log theta`: a coarse grid to
/// bracket the maximum, then a root of the analytic score inside the bracket
/// (Brent's minimizer on the likelihood if the score does not change sign).
/// A maximum at the bottom of the grid is taken as the boundary `theta = 0`.
fn search_theta(prep: &Prepared, opts: &FitOptions) -> Result<Search> {
    let mut neg = |t: f64| prep.evaluate(libm::exp(t)).map(|e| -e.loglik);
    let mut ts: Vec<f64> = (GRID_LO..=GRID_HI).map(f64::from).collect();
    let mut fs = Vec::with_capacity(ts.len());
    for &t in &ts {
        fs.push(neg(t)?);
    }
    let mut best = argmin(&fs);
    if best == 0 {
        let boundary = prep.evaluate(0.0)?;
        if -boundary.loglik <= fs[0] {
            return Ok(Search {
                theta: 0.0,
                iterations: 0,
                converged: true,
            });
        }
    }
    while best == ts.len() - 1 {
        let t = ts[best] + 5.0;
        if t > EXPAND_LIMIT {
            return Ok(Search {
                theta: libm::exp(ts[best]),
                iterations: 0,
                converged: false,
            });
        }
        ts.push(t);
        fs.push(neg(t)?);
        best = argmin(&fs);
    }
    let lo = ts[best.saturating_sub(1)];
    let hi = ts[best + 1];
    let mut score = |t: f64| prep.score_log_theta(libm::exp(t));
    let (s_lo, s_hi) = (score(lo)?, score(hi)?);
    let (t, iterations, converged) = if s_lo > 0.0 && s_hi < 0.0 {
        falling_root(&mut score, lo, hi, s_lo, s_hi, opts.max_iter)?
    } else {
        brent_minimize(&mut neg, lo, hi, opts.tolerance, opts.max_iter)?
    };
    Ok(Search {
        theta: libm::exp(t),
        iterations,
        converged,
    })
}

fn argmin(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x < v[best] {
            best = i;
        }
    }
    best
}

/// Brent's golden-section/parabolic minimizer on `[a, b]`.
fn brent_minimize<F>(
    f: &mut F,
    mut a: f64,
    mut b: f64,
    tol: f64,
    max_iter: usize,
) -> Result<(f64, usize, bool)>
where
    F: FnMut(f64) -> Result<f64>,
{
    const GOLD: f64 = 0.381_966_011_250_105_1;
    const SQRT_EPS: f64 = 1.490_116_119_384_765_6e-8;
    let mut x = a + GOLD * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = f(x)?;
    let (mut fw, mut fv) = (fx, fx);
    let (mut d, mut e) = (0.0f64, 0.0f64);
    for iter in 0..max_iter {
        let xm = 0.5 * (a + b);
        let tol1 = SQRT_EPS * libm::fabs(x) + tol / 3.0;
        let tol2 = 2.0 * tol1;
        if libm::fabs(x - xm) <= tol2 - 0.5 * (b - a) {
            return Ok((x, iter, true));
        }
        let mut golden = true;
        if libm::fabs(e) > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = libm::fabs(q);
            let e_prev = e;
            e = d;
            if libm::fabs(p) < libm::fabs(0.5 * q * e_prev) && p > q * (a - x) && p < q * (b - x) {
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = libm::copysign(tol1, xm - x);
                }
                golden = false;
            }
        }
        if golden {
            e = if x < xm { b - x } else { a - x };
            d = GOLD * e;
        }
        let u = if libm::fabs(d) >= tol1 {
            x + d
        } else {
            x + libm::copysign(tol1, d)
        };
        let fu = f(u)?;
        if fu <= fx {
            if u < x {
                b = x;
            } else {
                a = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    Ok((x, max_iter, false))
}

pub fn fit_reml_with(design: &DesignMatrix, opts: &FitOptions) -> Result<FittedModel> {
    let prep = Prepared::new(design, opts.drop_collinear)?;
    let search = search_theta(&prep, opts)?;
    let eval = prep.evaluate(search.theta)?;

    let mut coefficients = eval.beta.clone();
    if let Some(k) = prep.intercept {
        coefficients[k] += prep.y_shift;
    }
    let standard_errors = eval
        .chol
        .inverse_diag()
        .into_iter()
        .map(|d| libm::sqrt(eval.sigma2 * d))
        .collect();

    let group_effects = prep
        .groups
        .iter()
        .map(|g| {
            let w = search.theta / (1.0 + g.n as f64 * search.theta);
            let fitted: f64 = g.sx.iter().zip(&eval.beta).map(|(s, b)| s * b).sum();
            (g.label.clone(), w * (g.sy - fitted))
        })
        .collect();
    let sizes: Vec<usize> = prep.groups.iter().map(|g| g.n).collect();
    let group_sizes = GroupSizes {
        min: sizes.iter().copied().min().unwrap_or(0),
        max: sizes.iter().copied().max().unwrap_or(0),
        mean: prep.n as f64 / sizes.len() as f64,
    };

    Ok(FittedModel {
        columns: prep
            .kept
            .iter()
            .map(|&j| design.columns[j].clone())
            .collect(),
        coefficients,
        standard_errors,
        group_variance: search.theta * eval.sigma2,
        scale: eval.sigma2,
        theta: search.theta,
        reml_loglik: eval.loglik,
        converged: search.converged,
        iterations: search.iterations,
        n_observations: prep.n,
        n_groups: prep.groups.len(),
        group_sizes,
        group_effects,
        dropped_columns: prep
            .dropped
            .iter()
            .map(|&j| design.columns[j].name())
            .collect(),
        layout: design.layout.clone(),
    })
}

/// One row of a coefficient table. Reference levels carry `coef = 0` and no
/// interval or p-value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientStat {
    pub cov_name: String,
    pub level: String,
    pub coef: f64,
    pub se: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub p_value: Option<f64>,
    pub num_probes: Option<u64>,
    pub reference: bool,
}

impl CoefficientStat {
    pub fn is_intercept(&self) -> bool {
        self.cov_name == INTERCEPT
    }

    pub fn reference(cov_name: &str, level: &str, num_probes: Option<u64>) -> CoefficientStat {
        CoefficientStat {
            cov_name: cov_name.into(),
            level: level.into(),
            coef: 0.0,
            se: None,
            ci_low: None,
            ci_high: None,
            p_value: None,
            num_probes,
            reference: true,
        }
    }

    /// Wald statistics for an estimate with standard error `se`.
    pub fn wald(
        cov_name: &str,
        level: &str,
        coef: f64,
        se: f64,
        confidence: f64,
    ) -> Result<CoefficientStat> {
        let z_crit = critical_z(confidence)?;
        if !(se > 0.0) {
            return Err(Error::ZeroStandardError(alloc::format!(
                "{cov_name}[{level}]"
            )));
        }
        Ok(CoefficientStat {
            cov_name: cov_name.into(),
            level: level.into(),
            coef,
            se: Some(se),
            ci_low: Some(coef - z_crit * se),
            ci_high: Some(coef + z_crit * se),
            p_value: Some(two_sided_p(coef / se)),
            num_probes: None,
            reference: false,
        })
    }
}

pub const INTERCEPT: &str = "Intercept";

/// `z_{(1 + confidence) / 2}`.
pub fn critical_z(confidence: f64) -> Result<f64> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::InvalidConfidence(confidence));
    }
    Ok(normal_quantile(0.5 * (1.0 + confidence)))
}

/// Standard error implied by a symmetric normal confidence interval.
pub fn se_from_interval(ci_low: f64, ci_high: f64, confidence: f64) -> Result<f64> {
    Ok((ci_high - ci_low) / (2.0 * critical_z(confidence)?))
}

/// Wald table in layout order: intercept, then per covariate its reference
/// level followed by the fitted levels. Columns dropped as collinear are
/// omitted.
pub fn wald_stats(model: &FittedModel, confidence: f64) -> Result<Vec<CoefficientStat>> {
    critical_z(confidence)?;
    if !model.converged {
        return Err(Error::NotConverged);
    }
    let stat_for = |cov: Option<&str>, level: &str| -> Option<Result<CoefficientStat>> {
        let k = model
            .columns
            .iter()
            .position(|c| c.covariate.as_deref() == cov && (cov.is_none() || c.level == level))?;
        let name = cov.unwrap_or(INTERCEPT);
        Some(CoefficientStat::wald(
            name,
            &model.columns[k].level,
            model.coefficients[k],
            model.standard_errors[k],
            confidence,
        ))
    };
    let mut out = Vec::new();
    if let Some(s) = stat_for(None, "-") {
        out.push(s?);
    }
    for cov in &model.layout {
        out.push(CoefficientStat::reference(
            &cov.name,
            &cov.levels[0],
            Some(cov.counts[0]),
        ));
        for (level, count) in cov.levels.iter().zip(&cov.counts).skip(1) {
            if let Some(s) = stat_for(Some(&cov.name), level) {
                let mut s = s?;
                s.num_probes = Some(*count);
                out.push(s);
            }
        }
    }
    Ok(out)
}
