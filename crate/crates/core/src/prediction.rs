//! Scenario FAR prediction from a coefficient table.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::covariates::{CovariateSpec, Scenario};
use crate::error::{Error, Result};
use crate::lmm::CoefficientStat;

/// Printed with every estimate.
pub const TAR_CAVEAT: &str =
    "FAR estimates assume the operating point where the true accept rate is 0.5 for the scenario.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub covariate: String,
    pub level: String,
    pub coef: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FarEstimate {
    /// Predicted `log10(FAR)`.
    pub s: f64,
    pub far: f64,
    pub one_in_n: u64,
    /// Intercept first, then each non-reference choice in spec order.
    pub terms: Vec<Term>,
}

impl FarEstimate {
    /// `"1 in 1,469"`.
    pub fn one_in_n_text(&self) -> String {
        format!("1 in {}", group_thousands(self.one_in_n))
    }
}

/// Formats an integer with comma thousands separators.
pub fn group_thousands(n: u64) -> String {
    let digits = format!("{n}");
    let mut out = String::with_capacity(digits.len() + digits.len() / 3);
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

/// `S = intercept + sum of chosen-level coefficients`, `FAR = 10^S`.
pub fn predict_far(
    coeffs: &[CoefficientStat],
    spec: &CovariateSpec,
    scenario: &Scenario,
) -> Result<FarEstimate> {
    let intercept = coeffs
        .iter()
        .find(|c| c.is_intercept())
        .ok_or(Error::MissingIntercept)?;
    let chosen = scenario.resolve(spec)?;
    let mut terms = Vec::with_capacity(chosen.len() + 1);
    terms.push(Term {
        covariate: intercept.cov_name.clone(),
        level: intercept.level.clone(),
        coef: intercept.coef,
    });
    for (cov, &idx) in spec.covariates.iter().zip(&chosen) {
        if idx == 0 {
            continue;
        }
        let level = &cov.levels[idx].name;
        let stat = coeffs
            .iter()
            .find(|c| {
                !c.is_intercept()
                    && cov.matches(&c.cov_name)
                    && cov.find_level(&c.level) == Some(idx)
            })
            .ok_or_else(|| Error::UnknownLevel {
                covariate: cov.name.clone(),
                level: level.clone(),
            })?;
        terms.push(Term {
            covariate: cov.name.clone(),
            level: level.clone(),
            coef: stat.coef,
        });
    }
    let s = terms.iter().fold(0.0, |acc, t| acc + t.coef);
    Ok(FarEstimate {
        s,
        far: libm::pow(10.0, s),
        one_in_n: libm::round(libm::pow(10.0, -s)) as u64,
        terms,
    })
}
