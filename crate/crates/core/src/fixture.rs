//! The published coefficient table, model summary and group sizes, embedded
//! as printed.

use alloc::vec::Vec;

use crate::lmm::{se_from_interval, CoefficientStat};
use crate::report::ModelSummary;

/// Between-group variance printed under the coefficients.
pub const PUBLISHED_GROUP_VARIANCE: f64 = 1.157;

fn fitted(
    cov: &str,
    level: &str,
    coef: f64,
    lo: f64,
    hi: f64,
    p: f64,
    n: Option<u64>,
) -> CoefficientStat {
    CoefficientStat {
        cov_name: cov.into(),
        level: level.into(),
        coef,
        se: se_from_interval(lo, hi, 0.95).ok(),
        ci_low: Some(lo),
        ci_high: Some(hi),
        p_value: Some(p),
        num_probes: n,
        reference: false,
    }
}

fn reference(cov: &str, level: &str, n: Option<u64>) -> CoefficientStat {
    CoefficientStat::reference(cov, level, n)
}

/// Every row of the published table in printed order. Standard errors are
/// implied by the 95% intervals.
pub fn load_paper_coefficients() -> Vec<CoefficientStat> {
    alloc::vec![
        fitted("Intercept", "-", -7.003, -7.340, -6.666, 0.000, None),
        reference("Algorithm", "System A", Some(8245)),
        fitted(
            "Algorithm",
            "System B",
            0.273,
            0.210,
            0.337,
            0.000,
            Some(8213)
        ),
        fitted(
            "Algorithm",
            "System C",
            0.447,
            0.383,
            0.511,
            0.000,
            Some(8230)
        ),
        fitted(
            "Algorithm",
            "System D",
            0.692,
            0.628,
            0.756,
            0.000,
            Some(8237)
        ),
        fitted(
            "Algorithm",
            "System E",
            0.407,
            0.343,
            0.471,
            0.000,
            Some(8194)
        ),
        reference("Has Gait", "False", Some(24804)),
        fitted("Has Gait", "True", -0.283, -0.332, -0.233, 0.000, Some(0)),
        reference("Has Turb.", "False", Some(27586)),
        fitted("Has Turb.", "True", 0.057, -0.012, 0.127, 0.104, Some(0)),
        reference("Head Height", ">90 Pix", Some(11388)),
        fitted(
            "Head Height",
            "60-90 Pix",
            0.480,
            0.384,
            0.576,
            0.000,
            Some(3473)
        ),
        fitted(
            "Head Height",
            "50-60 Pix",
            0.516,
            0.406,
            0.625,
            0.000,
            Some(3293)
        ),
        fitted(
            "Head Height",
            "40-50 Pix",
            0.673,
            0.576,
            0.771,
            0.000,
            Some(7253)
        ),
        fitted(
            "Head Height",
            "30-40 Pix",
            1.322,
            1.216,
            1.428,
            0.000,
            Some(4581)
        ),
        fitted(
            "Head Height",
            "<30 Pix",
            1.884,
            1.730,
            2.038,
            0.000,
            Some(1290)
        ),
        fitted(
            "Head Height",
            "Restricted",
            2.232,
            2.151,
            2.313,
            0.000,
            Some(9841)
        ),
        reference("Modality", "Face", Some(10525)),
        fitted("Modality", "Body", 0.742, 0.642, 0.842, 0.000, Some(30594)),
        reference("Camera Location", "Ctrl", Some(7392)),
        fitted(
            "Camera Location",
            "Short Range",
            -0.344,
            -0.489,
            -0.200,
            0.000,
            Some(2155)
        ),
        fitted(
            "Camera Location",
            "Medium Range",
            0.949,
            0.792,
            1.106,
            0.000,
            Some(10472)
        ),
        fitted(
            "Camera Location",
            "Long Range",
            1.952,
            1.716,
            2.187,
            0.000,
            Some(9673)
        ),
        fitted(
            "Camera Location",
            "Elevated",
            0.214,
            0.109,
            0.318,
            0.000,
            Some(10510)
        ),
        fitted(
            "Camera Location",
            "Uav",
            0.999,
            -0.122,
            2.120,
            0.081,
            Some(917)
        ),
        reference("Solar Loading", "0-300 W/M$^2$", Some(19375)),
        fitted(
            "Solar Loading",
            "300-600 W/M$^2$",
            -0.199,
            -0.266,
            -0.132,
            0.000,
            Some(7404)
        ),
        fitted(
            "Solar Loading",
            "600-900 W/M$^2$",
            0.511,
            0.434,
            0.588,
            0.000,
            Some(7024)
        ),
        fitted(
            "Solar Loading",
            "Above 900 W/M$^2$",
            0.868,
            0.791,
            0.945,
            0.000,
            Some(7316)
        ),
        reference("Wind Speed", "0-3 M/S", Some(25929)),
        fitted(
            "Wind Speed",
            "3-6 M/S",
            -0.156,
            -0.213,
            -0.099,
            0.000,
            Some(12453)
        ),
        fitted(
            "Wind Speed",
            "6-9 M/S",
            -0.043,
            -0.145,
            0.059,
            0.412,
            Some(2432)
        ),
        fitted(
            "Wind Speed",
            "9-12 M/S",
            0.265,
            0.013,
            0.516,
            0.039,
            Some(305)
        ),
        reference("Temperature", "Below 0 C", Some(4059)),
        fitted(
            "Temperature",
            "0-10 C",
            0.114,
            0.031,
            0.197,
            0.007,
            Some(8327)
        ),
        fitted(
            "Temperature",
            "10-20 C",
            0.333,
            0.185,
            0.481,
            0.000,
            Some(8178)
        ),
        fitted(
            "Temperature",
            "20-30 C",
            -0.342,
            -0.501,
            -0.183,
            0.000,
            Some(17684)
        ),
        fitted(
            "Temperature",
            "30-40 C",
            -0.143,
            -0.329,
            0.043,
            0.132,
            Some(2871)
        ),
    ]
}

/// The published model summary.
pub fn published_summary() -> ModelSummary {
    ModelSummary {
        model: "MixedLM".into(),
        dependent_variable: "est far".into(),
        n_observations: 41119,
        method: "REML".into(),
        n_groups: 55,
        scale: 4.3539,
        min_group_size: 30,
        max_group_size: 3185,
        mean_group_size: 747.6,
        log_likelihood: -88768.7911,
        converged: true,
    }
}

/// Rows per sensor x collection group, largest first.
pub const PUBLISHED_GROUP_COUNTS: [(&str, u64); 55] = [
    ("DWC-MPTZ336XW - BGC3", 3185),
    ("acA2040-90um - BGC4", 2175),
    ("DWC-MPTZ336XW - BGC1", 2025),
    ("HDZP252DI - BGC3", 1875),
    ("acA2040-120uc - BGC2", 1601),
    ("XNZ-6320 - BGC3", 1591),
    ("acA2040-120uc - BGC1", 1535),
    ("HDZP252DI - BGC1", 1490),
    ("MPT-50 - BGC4", 1465),
    ("acA2040-120uc - BGC4", 1429),
    ("Q6215-LE - BGC4", 1427),
    ("PNP-9200RH - BGC2", 1315),
    ("HDZP252DI - BGC2", 1303),
    ("HDZP252DI - BGC4", 1182),
    ("MPT-90 - BGC2", 1074),
    ("acA2040-120um - BGC2", 1060),
    ("PNP-9200RH - BGC3", 1055),
    ("DWC-MPTZ336XW - BGC2", 965),
    ("acA2040-120uc - BGC3", 911),
    ("acA4112-30um - BGC4", 848),
    ("acA4112-30um - BGC3", 771),
    ("XNZ-6320 - BGC4", 733),
    ("XNZ-6320 - BGC2", 721),
    ("Q6215-LE - BGC2", 680),
    ("acA2040-90um - BGC2", 644),
    ("acA4112-30um - BGC1", 610),
    ("PNP-9200RH - BGC1", 605),
    ("Q6215-LE - BGC3", 525),
    ("Q6215-LE - BGC1", 505),
    ("QNP-6230H - BGC3", 480),
    ("P5655-E - BGC4", 470),
    ("Anafi - BGC1", 465),
    ("QNP-6230H - BGC4", 450),
    ("DWC-MPTZ336XW - BGC1.1", 420),
    ("HDZP252DI - BGC1.1", 370),
    ("P5655-E - BGC2", 365),
    ("XNZ-6320 - BGC1.1", 284),
    ("DWC-MPTZ336XW - BGC4", 275),
    ("Anafi USA - BGC1", 250),
    ("acA2040-90uc - BGC1", 245),
    ("MIC-IP-FUSION-9000IV - BGC4", 220),
    ("MPT-90 - BGC3", 205),
    ("PNP-9200RH - BGC4", 195),
    ("Anafi USA - BGC1.1", 172),
    ("Q6215-LE - BGC1.1", 170),
    ("PNP-9200RH - BGC1.1", 165),
    ("acA2040-120um - BGC1.1", 123),
    ("MIC-IP-FUSION-9000IV - BGC2", 105),
    ("P5655-E - BGC3", 75),
    ("acA2040-120um - BGC3", 75),
    ("P5655-E - BGC1.1", 65),
    ("acA2040-120uc - BGC1.1", 55),
    ("acA2040-90uc - BGC1.1", 50),
    ("a2A5328-15ucPRO - BGC3", 35),
    ("Mantis i45 EO - BGC1.1", 30),
];

#[cfg(test)]
mod tests {
    use super::*;

    fn lookup(cov: &str, level: &str) -> CoefficientStat {
        load_paper_coefficients()
            .into_iter()
            .find(|s| s.cov_name == cov && s.level == level)
            .unwrap()
    }

    #[test]
    fn table_rows() {
        let rows = load_paper_coefficients();
        assert_eq!(rows.len(), 38);
        assert_eq!(
            rows.iter()
                .filter(|r| !r.reference && !r.is_intercept())
                .count(),
            28
        );
        assert_eq!(lookup("Algorithm", "System D").coef, 0.692);
        let uav = lookup("Camera Location", "Uav");
        assert_eq!(
            (uav.coef, uav.ci_low, uav.ci_high, uav.p_value),
            (0.999, Some(-0.122), Some(2.120), Some(0.081))
        );
        let face = lookup("Modality", "Face");
        assert!(face.reference && face.coef == 0.0);
    }

    #[test]
    fn group_counts_add_up() {
        let total: u64 = PUBLISHED_GROUP_COUNTS.iter().map(|g| g.1).sum();
        assert_eq!(total, published_summary().n_observations as u64);
        assert_eq!(
            PUBLISHED_GROUP_COUNTS[0].1 as usize,
            published_summary().max_group_size
        );
        assert_eq!(
            PUBLISHED_GROUP_COUNTS[54].1 as usize,
            published_summary().min_group_size
        );
        let algorithms: u64 = load_paper_coefficients()
            .iter()
            .filter(|r| r.cov_name == "Algorithm")
            .map(|r| r.num_probes.unwrap())
            .sum();
        assert_eq!(algorithms, total);
    }
}
