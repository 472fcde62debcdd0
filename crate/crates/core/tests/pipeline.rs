//! Synthetic tables through normalization, drop rules, design and fit.

use covfar_core::covariates::{build_design, CovariateSpec};
use covfar_core::data::apply_drop_rules;
use covfar_core::lmm::{fit_reml, wald_stats};
use covfar_core::normalization::{normalize_table_with, AnchorPolicy, NormalizeOptions};
use covfar_core::synthetic::{generate, SynthConfig};

/// Anchors with at least 20 exceedances at 2e5 impostors. Anchors backed by
/// one or two exceedances make the fitted slope noisy, and genuine scores lie
/// several decades below the anchors, which amplifies that noise.
fn options() -> NormalizeOptions {
    NormalizeOptions {
        anchor_fars: vec![1e-4, 1e-3, 1e-2],
        policy: AnchorPolicy::DROP,
    }
}

#[test]
fn published_shape_table_recovers_truth() {
    let spec = CovariateSpec::standard();
    let config = SynthConfig {
        impostors_per_algorithm: 200_000,
        ..SynthConfig::published_shape(7)
    };
    let (table, truth) = generate(&config, &spec).unwrap();
    let (normalized, dropped) = normalize_table_with(&table, &options()).unwrap();
    assert!(dropped.is_empty());
    for tail in &truth.tails {
        let map = &normalized.maps[&tail.name];
        assert!(
            (map.m / tail.slope - 1.0).abs() < 0.05,
            "{}: {} vs {}",
            tail.name,
            map.m,
            tail.slope
        );
    }

    let (_, log) = apply_drop_rules(&table);
    assert_eq!(log.dropped_missing_weather, 900);
    assert_eq!(log.dropped_unspecified_sex, 20);
    let kept = normalized.without_dropped(&log);
    let design = build_design(&kept, &spec).unwrap();
    assert_eq!(design.n_rows(), 5 * 8295);

    let model = fit_reml(&design).unwrap();
    assert!(model.converged);
    assert_eq!(model.columns.len(), truth.beta.len());
    let within = model
        .coefficients
        .iter()
        .zip(&model.standard_errors)
        .zip(&truth.beta)
        .filter(|((b, se), (_, t))| (*b - t).abs() <= 3.0 * *se)
        .count();
    assert!(
        within as f64 >= 0.9 * truth.beta.len() as f64,
        "{within} of {}",
        truth.beta.len()
    );

    let sd = model.scale.sqrt();
    assert!(
        (sd / truth.residual_sd - 1.0).abs() < 0.1,
        "residual sd {sd}"
    );
    assert!(model.group_variance > 0.0);

    let stats = wald_stats(&model, 0.95).unwrap();
    assert_eq!(stats.len(), 1 + 37);
}

#[test]
fn null_model_recovers_intercept() {
    let spec = CovariateSpec::standard();
    let mut config = SynthConfig {
        n_probes: 2000,
        impostors_per_algorithm: 50_000,
        group_sd: 0.0,
        ..SynthConfig::published_shape(3)
    };
    config.true_beta = vec![("Intercept".into(), -4.0)];
    let (table, _) = generate(&config, &spec).unwrap();
    let (normalized, _) = normalize_table_with(&table, &options()).unwrap();
    let (_, log) = apply_drop_rules(&table);
    let design = build_design(&normalized.without_dropped(&log), &spec).unwrap();
    let model = fit_reml(&design).unwrap();
    assert!((model.coefficients[0] + 4.0).abs() <= 3.0 * model.standard_errors[0]);
    assert!(
        model.group_variance < 0.05 * model.scale,
        "{}",
        model.group_variance
    );
}
