//! Empirical verification rates and score quantiles.
//!
//! A comparison is accepted when its score is greater than or equal to the
//! threshold. Tied scores are counted, not ranked, so duplicates contribute
//! multiply to a rate.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// FAR requested from the grid.
    pub target_far: f64,
    pub threshold: f64,
    /// Empirical FAR at `threshold`.
    pub far: f64,
    pub tar: f64,
}

/// Finite scores sorted ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct SortedScores(Vec<f64>);

impl SortedScores {
    pub fn new(scores: &[f64]) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::EmptyScores);
        }
        if let Some(row) = scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::NonFinite {
                field: "score",
                row,
            });
        }
        let mut v = scores.to_vec();
        v.sort_unstable_by(f64::total_cmp);
        Ok(SortedScores(v))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Fraction of scores `>= threshold`.
    pub fn rate_at_or_above(&self, threshold: f64) -> f64 {
        let below = self.0.partition_point(|&s| s < threshold);
        (self.0.len() - below) as f64 / self.0.len() as f64
    }

    /// Continuous quantile at ascending position `(1 - far) * (N - 1)`,
    /// linearly interpolated between adjacent order statistics.
    pub fn threshold_at_far(&self, target_far: f64) -> Result<f64> {
        check_far(target_far)?;
        let n = self.0.len();
        if n < 2 || target_far * (n as f64) < 1.0 - 1e-9 {
            return Err(Error::InsufficientImpostorSupport {
                target_far,
                needed: required_support(target_far).max(2),
                available: n,
            });
        }
        let pos = (1.0 - target_far) * (n - 1) as f64;
        let k = libm::floor(pos) as usize;
        if k >= n - 1 {
            return Ok(self.0[n - 1]);
        }
        let frac = pos - k as f64;
        let (lo, hi) = (self.0[k], self.0[k + 1]);
        Ok(lo + frac * (hi - lo))
    }
}

/// Smallest impostor count at which `far` is resolvable (`N * far >= 1`).
pub fn required_support(far: f64) -> u64 {
    libm::ceil(1.0 / far - 1e-9) as u64
}

fn check_far(f: f64) -> Result<()> {
    if f > 0.0 && f < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidFar { target_far: f })
    }
}

fn accept_rate(scores: &[f64], threshold: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::EmptyScores);
    }
    if let Some(row) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFinite {
            field: "score",
            row,
        });
    }
    let accepted = scores.iter().filter(|&&s| s >= threshold).count();
    Ok(accepted as f64 / scores.len() as f64)
}

pub fn empirical_far(impostor_scores: &[f64], threshold: f64) -> Result<f64> {
    accept_rate(impostor_scores, threshold)
}

pub fn empirical_tar(genuine_scores: &[f64], threshold: f64) -> Result<f64> {
    accept_rate(genuine_scores, threshold)
}

pub fn threshold_at_far(impostor_scores: &[f64], target_far: f64) -> Result<f64> {
    SortedScores::new(impostor_scores)?.threshold_at_far(target_far)
}

/// One operating point per grid FAR: threshold from the impostor quantile,
/// then the empirical rates at that threshold.
pub fn roc_curve(genuine: &[f64], impostor: &[f64], far_grid: &[f64]) -> Result<Vec<RocPoint>> {
    if far_grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::UnsortedGrid);
    }
    let genuine = SortedScores::new(genuine)?;
    let impostor = SortedScores::new(impostor)?;
    far_grid
        .iter()
        .map(|&f| {
            let threshold = impostor.threshold_at_far(f)?;
            Ok(RocPoint {
                target_far: f,
                threshold,
                far: impostor.rate_at_or_above(threshold),
                tar: genuine.rate_at_or_above(threshold),
            })
        })
        .collect()
}
