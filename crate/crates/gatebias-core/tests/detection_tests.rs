mod common;

use approx::assert_abs_diff_eq;
use gatebias_core::error::Error;
use gatebias_core::{
    bonferroni_adjust, bootstrap_moments, cross_group_bias, detect_groups, estimate_group_bias,
    moments_from_replicates, wald_test, BiasEstimate, BiasMoments, Dataset, DetectionConfig,
    EffectScale, GateEstimator, Half, SplitAssignment, SplitTag, Warning,
};

fn some(vals: &[f64]) -> Vec<Option<f64>> {
    vals.iter().copied().map(Some).collect()
}

fn estimate_with(b_hat: f64, replicates: &[f64], alpha: f64) -> (BiasEstimate, BiasMoments) {
    let m = moments_from_replicates(some(replicates));
    let est = wald_test("g", b_hat, &m, replicates.len(), alpha).unwrap();
    (est, m)
}

#[test]
fn bonferroni_examples() {
    assert_eq!(bonferroni_adjust(0.05, 20).unwrap(), 0.0025);
    assert_eq!(bonferroni_adjust(0.05, 1).unwrap(), 0.05);
    assert_eq!(bonferroni_adjust(0.10, 4).unwrap(), 0.025);
    assert!(matches!(
        bonferroni_adjust(0.0, 2),
        Err(Error::InvalidAlpha { .. })
    ));
    assert!(matches!(
        bonferroni_adjust(1.0, 2),
        Err(Error::InvalidAlpha { .. })
    ));
    assert!(bonferroni_adjust(0.05, 0).is_err());
}

/// Model-implied 1.4 on the predict subset, experimental ratio 1.2 on the
/// estimate subset: the bias is the difference.
#[test]
fn group_bias_is_model_minus_experimental() {
    let mut rows = Vec::new();
    let mut pattern = String::new();
    // Estimate subset: treated mean 0.6 (3 of 5), control mean 0.5 (2 of 4).
    for i in 0..5 {
        rows.push(common::row("g", 1, f64::from(i < 3), 1.0));
        pattern.push('D');
    }
    for i in 0..4 {
        rows.push(common::row("g", 0, f64::from(i < 2), 1.0));
        pattern.push('D');
    }
    // Predict subset: constant prediction 1.4.
    for t in [0u8, 1] {
        rows.push(common::row("g", t, 0.0, 1.4));
        pattern.push('d');
    }
    let ds = common::dataset(EffectScale::Relative, rows);
    let split = common::manual_split(common::tags(&pattern));
    let view = ds.group_view("g").unwrap();
    let b = estimate_group_bias(
        &view,
        EffectScale::Relative,
        &GateEstimator::Means,
        &split,
        Half::Detect,
    )
    .unwrap();
    assert_abs_diff_eq!(b, 0.2, epsilon = 1e-15);
}

/// Noiseless outcomes with predictions equal to the true effect leave nothing
/// to detect.
#[test]
fn correct_predictions_have_zero_bias() {
    let tau = 0.75;
    let mut rows = Vec::new();
    let mut pattern = String::new();
    for tag in ['D', 'd'] {
        for t in [0u8, 1] {
            for _ in 0..4 {
                rows.push(common::row("g", t, tau * f64::from(t), tau));
                pattern.push(tag);
            }
        }
    }
    let ds = common::dataset(EffectScale::Additive, rows);
    let split = common::manual_split(common::tags(&pattern));
    let view = ds.group_view("g").unwrap();
    let b = estimate_group_bias(
        &view,
        EffectScale::Additive,
        &GateEstimator::Means,
        &split,
        Half::Detect,
    )
    .unwrap();
    assert_eq!(b, 0.0);
}

#[test]
fn group_bias_requires_populated_subsets() {
    let rows = vec![common::row("g", 1, 1.0, 1.0), common::row("g", 0, 0.0, 1.0)];
    let ds = common::dataset(EffectScale::Additive, rows);
    let split = common::manual_split(common::tags("DD"));
    let view = ds.group_view("g").unwrap();
    assert!(matches!(
        estimate_group_bias(
            &view,
            EffectScale::Additive,
            &GateEstimator::Means,
            &split,
            Half::Detect,
        ),
        Err(Error::EmptySplit { .. })
    ));
}

#[test]
fn wald_detects_three_sigma_bias() {
    let m = BiasMoments {
        sigma_hat: 0.1,
        m2_hat: 0.01,
        rep_mean: 0.0,
        n_failed: 0,
        replicates: some(&[0.0; 4]),
    };
    let est = wald_test("g", 0.3, &m, 4, 0.05).unwrap();
    assert_abs_diff_eq!(est.z_stat, 3.0, epsilon = 1e-12);
    assert!(est.detected);
    assert_abs_diff_eq!(
        est.p_value,
        0.002699796063260189053303629536,
        epsilon = 1e-14
    );
}

#[test]
fn wald_null_bias_never_detects() {
    let (est, _) = estimate_with(0.0, &[0.1, -0.1, 0.2, -0.2], 0.05);
    assert_eq!(est.z_stat, 0.0);
    assert_eq!(est.p_value, 1.0);
    assert!(!est.detected);
    assert!(!est.degenerate_se);
}

#[test]
fn wald_z_one_point_five_is_not_significant() {
    let m = BiasMoments {
        sigma_hat: 0.1,
        m2_hat: 0.01,
        rep_mean: 0.0,
        n_failed: 0,
        replicates: some(&[0.0; 4]),
    };
    let est = wald_test("g", 0.15, &m, 4, 0.05).unwrap();
    assert_abs_diff_eq!(est.z_stat, 1.5, epsilon = 1e-15);
    assert_abs_diff_eq!(
        est.p_value,
        0.13361440253771613200898808196,
        epsilon = 1e-14
    );
    assert!(!est.detected);
    assert!(matches!(
        wald_test("g", 0.15, &m, 4, 1.5),
        Err(Error::InvalidAlpha { .. })
    ));
}

#[test]
fn wald_zero_standard_error_is_degenerate_not_fatal() {
    let (est, _) = estimate_with(0.4, &[0.4, 0.4, 0.4], 0.05);
    assert_eq!(est.sigma_hat, 0.0);
    assert_eq!(est.z_stat, 0.0);
    assert_eq!(est.p_value, 1.0);
    assert!(!est.detected);
    assert!(est.degenerate_se);
}

#[test]
fn replicate_moments_hand_example() {
    let m = moments_from_replicates(some(&[-1.0, 1.0]));
    assert_eq!(m.sigma_hat, 2f64.sqrt());
    assert_eq!(m.m2_hat, 1.0);
    assert_eq!(m.rep_mean, 0.0);
    assert_eq!(m.n_failed, 0);

    // Failed replicates are excluded from moments but kept in place.
    let m = moments_from_replicates(vec![Some(-1.0), None, Some(1.0)]);
    assert_eq!(m.sigma_hat, 2f64.sqrt());
    assert_eq!(m.m2_hat, 1.0);
    assert_eq!(m.n_failed, 1);
    assert_eq!(m.replicates.len(), 3);
}

/// One group, each (subset, arm) stratum populated; pattern interleaves tags.
fn bootstrap_fixture(pred_a: f64) -> (Dataset, SplitAssignment) {
    let mut rows = Vec::new();
    let mut pattern = String::new();
    for tag in ['D', 'd', 'M', 'm'] {
        for t in [0u8, 1] {
            for i in 0..8 {
                // Outcomes T + delta with deltas balanced within each cell.
                let delta = if i % 2 == 0 { 0.125 } else { -0.125 };
                rows.push(common::row("g", t, f64::from(t) + delta, pred_a));
                pattern.push(tag);
            }
        }
    }
    let ds = common::dataset(EffectScale::Additive, rows);
    let split = common::manual_split(common::tags(&pattern));
    (ds, split)
}

#[test]
fn bootstrap_moments_are_deterministic_per_seed() {
    let (ds, split) = bootstrap_fixture(1.5);
    let view = ds.group_view("g").unwrap();
    let run = |seed| {
        bootstrap_moments(
            &view,
            EffectScale::Additive,
            &GateEstimator::Means,
            &split,
            Half::Detect,
            50,
            seed,
        )
        .unwrap()
    };
    let a = run(7);
    let b = run(7);
    assert_eq!(a, b);
    let c = run(8);
    assert_ne!(a.replicates, c.replicates);
    assert!(a.sigma_hat > 0.0);
    assert_eq!(a.n_failed, 0);
}

#[test]
fn bootstrap_rejects_tiny_replicate_counts() {
    let (ds, split) = bootstrap_fixture(1.5);
    let view = ds.group_view("g").unwrap();
    assert!(matches!(
        bootstrap_moments(
            &view,
            EffectScale::Additive,
            &GateEstimator::Means,
            &split,
            Half::Detect,
            1,
            0,
        ),
        Err(Error::InvalidConfig { .. })
    ));
}

#[test]
fn constant_data_has_zero_bootstrap_sigma() {
    let mut rows = Vec::new();
    let mut pattern = String::new();
    for tag in ['D', 'd'] {
        for t in [0u8, 1] {
            for _ in 0..4 {
                rows.push(common::row("g", t, 1.0, 1.3));
                pattern.push(tag);
            }
        }
    }
    let ds = common::dataset(EffectScale::Relative, rows);
    let split = common::manual_split(common::tags(&pattern));
    let view = ds.group_view("g").unwrap();
    let m = bootstrap_moments(
        &view,
        EffectScale::Relative,
        &GateEstimator::Means,
        &split,
        Half::Detect,
        30,
        0,
    )
    .unwrap();
    assert_eq!(m.sigma_hat, 0.0);
    // Every replicate reproduces the same bias: ratio 1, model 1.3.
    assert!(m
        .replicates
        .iter()
        .all(|r| (r.unwrap() - 0.3).abs() < 1e-15));
}

/// Duplicating every row never moves the point estimate and shrinks the
/// bootstrap SD in the vast majority of seeds.
#[test]
fn duplication_keeps_b_hat_and_shrinks_sigma() {
    let (ds, split) = bootstrap_fixture(1.25);
    let doubled_rows: Vec<_> = ds.rows.iter().cloned().chain(ds.rows.iter().cloned()).collect();
    let ds2 = common::dataset(EffectScale::Additive, doubled_rows);
    let mut tags2 = split.tags.clone();
    tags2.extend(split.tags.iter().copied());
    let split2 = common::manual_split(tags2);

    let view = ds.group_view("g").unwrap();
    let view2 = ds2.group_view("g").unwrap();
    let b1 = estimate_group_bias(
        &view,
        EffectScale::Additive,
        &GateEstimator::Means,
        &split,
        Half::Detect,
    )
    .unwrap();
    let b2 = estimate_group_bias(
        &view2,
        EffectScale::Additive,
        &GateEstimator::Means,
        &split2,
        Half::Detect,
    )
    .unwrap();
    assert_eq!(b1, b2);

    let mut shrank = 0;
    for seed in 0..20 {
        let m1 = bootstrap_moments(
            &view,
            EffectScale::Additive,
            &GateEstimator::Means,
            &split,
            Half::Detect,
            80,
            seed,
        )
        .unwrap();
        let m2 = bootstrap_moments(
            &view2,
            EffectScale::Additive,
            &GateEstimator::Means,
            &split2,
            Half::Detect,
            80,
            seed,
        )
        .unwrap();
        if m2.sigma_hat < m1.sigma_hat {
            shrank += 1;
        }
    }
    assert!(shrank >= 18, "sigma shrank in only {shrank}/20 seeds");
}

#[test]
fn cross_group_two_equal_groups_are_antisymmetric() {
    let (e1, m1) = estimate_with(0.2, &[0.15, 0.2, 0.25], 0.05);
    let (e2, m2) = estimate_with(-0.2, &[-0.15, -0.2, -0.25], 0.05);
    let out = cross_group_bias(&[e1, e2], &[100, 100], &[m1, m2], 0.05).unwrap();
    assert_eq!(out[0].value, 0.4);
    assert_eq!(out[1].value, -0.4);
    assert_eq!(out[0].sigma_hat, out[1].sigma_hat);
}

#[test]
fn cross_group_identical_biases_vanish() {
    let (e1, m1) = estimate_with(0.3, &[0.25, 0.3, 0.35], 0.05);
    let (e2, m2) = estimate_with(0.3, &[0.2, 0.3, 0.4], 0.05);
    let (e3, m3) = estimate_with(0.3, &[0.3, 0.3, 0.3], 0.05);
    let out = cross_group_bias(
        &[e1, e2, e3],
        &[50, 75, 125],
        &[m1, m2, m3],
        0.05,
    )
    .unwrap();
    for c in &out {
        assert_eq!(c.value, 0.0);
        assert!(!c.detected);
    }
}

#[test]
fn cross_group_weighted_complement_hand_example() {
    let (e1, m1) = estimate_with(0.1, &[0.05, 0.1, 0.15], 0.05);
    let (e2, m2) = estimate_with(0.4, &[0.35, 0.4, 0.45], 0.05);
    let out = cross_group_bias(&[e1, e2], &[150, 100], &[m1, m2], 0.05).unwrap();
    assert_abs_diff_eq!(out[0].value, -0.3, epsilon = 1e-15);
    assert_abs_diff_eq!(out[1].value, 0.3, epsilon = 1e-15);
}

#[test]
fn cross_group_pairs_replicates_complete_case() {
    let (e1, _) = estimate_with(1.0, &[1.0, 2.0, 3.0], 0.05);
    let (e2, _) = estimate_with(0.0, &[0.0, 0.5, 9.0], 0.05);
    let m1 = moments_from_replicates(vec![Some(1.0), Some(2.0), None, Some(3.0)]);
    let m2 = moments_from_replicates(vec![Some(0.0), Some(0.5), Some(9.0), None]);
    let out = cross_group_bias(&[e1, e2], &[10, 10], &[m1, m2], 0.05).unwrap();
    // Only replicates 0 and 1 are complete: diffs {1.0, 1.5}.
    assert_eq!(out[0].sigma_hat, 0.125f64.sqrt());
}

#[test]
fn cross_group_requires_two_groups() {
    let (e1, m1) = estimate_with(0.1, &[0.05, 0.1, 0.15], 0.05);
    assert!(matches!(
        cross_group_bias(&[e1], &[100], &[m1], 0.05),
        Err(Error::SingleGroup)
    ));
}

/// Two groups, one with a half-unit inflation in its predictions: the pipeline
/// flags exactly that group, at the default 2|G| Bonferroni adjustment.
#[test]
fn detect_groups_flags_only_the_biased_group() {
    let mut rows = Vec::new();
    let mut pattern = String::new();
    for (group, pred) in [("a", 1.5), ("b", 1.0)] {
        for tag in ['D', 'd'] {
            for t in [0u8, 1] {
                for i in 0..20 {
                    let delta = if i % 2 == 0 { 0.125 } else { -0.125 };
                    rows.push(common::row(group, t, f64::from(t) + delta, pred));
                    pattern.push(tag);
                }
            }
        }
    }
    let ds = common::dataset(EffectScale::Additive, rows);
    let split = common::manual_split(common::tags(&pattern));
    let views = ds.group_views();
    let cfg = DetectionConfig {
        n_boot: 199,
        ..DetectionConfig::default()
    };
    let out = detect_groups(
        &views,
        EffectScale::Additive,
        &GateEstimator::Means,
        &split,
        Half::Detect,
        &cfg,
    )
    .unwrap();
    assert_eq!(out.alpha_adjusted, 0.0125);
    assert_eq!(out.per_group.len(), 2);
    let a = &out.per_group[0];
    let b = &out.per_group[1];
    assert_eq!(a.group, "a");
    assert_eq!(a.b_hat, 0.5);
    assert!(a.detected);
    assert_eq!(b.b_hat, 0.0);
    assert!(!b.detected);
    assert_eq!(a.n, 80);
    assert_eq!(a.n_boot, 199);

    assert_eq!(out.cross_group.len(), 2);
    assert_eq!(out.cross_group[0].value, 0.5);
    assert_eq!(out.cross_group[1].value, -0.5);
    assert!(out.cross_group[0].detected);

    // Bit-reproducible end to end.
    let again = detect_groups(
        &views,
        EffectScale::Additive,
        &GateEstimator::Means,
        &split,
        Half::Detect,
        &cfg,
    )
    .unwrap();
    assert_eq!(out.per_group, again.per_group);
    assert_eq!(out.cross_group, again.cross_group);
    assert_eq!(out.moments, again.moments);
}

/// A single group runs unadjusted and reports no cross-group rows.
#[test]
fn detect_groups_single_group_skips_cross_tests() {
    let (ds, split) = bootstrap_fixture(1.25);
    let views = ds.group_views();
    let cfg = DetectionConfig {
        n_boot: 59,
        ..DetectionConfig::default()
    };
    let out = detect_groups(
        &views,
        EffectScale::Additive,
        &GateEstimator::Means,
        &split,
        Half::Detect,
        &cfg,
    )
    .unwrap();
    assert_eq!(out.alpha_adjusted, 0.05);
    assert_eq!(out.per_group.len(), 1);
    assert!(out.cross_group.is_empty());
}

#[test]
fn detect_groups_surfaces_degenerate_se_warning() {
    let mut rows = Vec::new();
    let mut pattern = String::new();
    for tag in ['D', 'd'] {
        for t in [0u8, 1] {
            for _ in 0..4 {
                rows.push(common::row("g", t, 1.0, 1.3));
                pattern.push(tag);
            }
        }
    }
    let ds = common::dataset(EffectScale::Relative, rows);
    let split = common::manual_split(common::tags(&pattern));
    let views = ds.group_views();
    let out = detect_groups(
        &views,
        EffectScale::Relative,
        &GateEstimator::Means,
        &split,
        Half::Detect,
        &DetectionConfig {
            n_boot: 19,
            ..DetectionConfig::default()
        },
    )
    .unwrap();
    assert!(out.per_group[0].degenerate_se);
    assert!(!out.per_group[0].detected);
    assert!(out
        .warnings
        .iter()
        .any(|w| matches!(w, Warning::ZeroStandardError { .. })));
}
