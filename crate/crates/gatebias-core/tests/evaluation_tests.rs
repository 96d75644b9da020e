mod common;

use approx::assert_abs_diff_eq;
use gatebias_core::error::Error;
use gatebias_core::{
    distribution_metrics, evaluate_end_to_end, residual_bias, residual_bias_many, Dataset,
    DebiasPlan, EffectScale, EvalConfig, GateEstimator, GroupCorrection, Half, ResidualConfig,
    ShrinkageStrategy, SplitAssignment,
};
use proptest::prelude::*;
use rand::RngExt;

/// Groups with every (tag, arm) stratum populated. Outcome is T + balanced
/// noise, prediction is 1 + the group's injected bias, so the true group bias
/// equals `bias` exactly on every subset.
fn four_tag_dataset(groups: &[(&str, f64)], per_cell: usize) -> (Dataset, SplitAssignment) {
    let mut rows = Vec::new();
    let mut pattern = String::new();
    for (group, bias) in groups {
        for tag in ['D', 'd', 'M', 'm'] {
            for t in [0u8, 1] {
                for i in 0..per_cell {
                    let delta = if i % 2 == 0 { 0.125 } else { -0.125 };
                    rows.push(common::row(group, t, f64::from(t) + delta, 1.0 + bias));
                    pattern.push(tag);
                }
            }
        }
    }
    let ds = common::dataset(EffectScale::Additive, rows);
    let split = common::manual_split(common::tags(&pattern));
    (ds, split)
}

fn plan_with(
    strategy: ShrinkageStrategy,
    source: Half,
    corrections: &[(&str, f64)],
) -> DebiasPlan {
    DebiasPlan {
        strategy,
        source_half: source,
        groups: corrections
            .iter()
            .map(|(g, c)| {
                (
                    g.to_string(),
                    GroupCorrection {
                        gamma: 1.0,
                        b_hat: *c,
                        correction: *c,
                        clamped: false,
                    },
                )
            })
            .collect(),
    }
}

fn residual_cfg(n_boot: usize) -> ResidualConfig {
    ResidualConfig {
        n_boot,
        ..ResidualConfig::default()
    }
}

#[test]
fn zero_gamma_residual_is_the_fresh_holdout_bias() {
    let (ds, split) = four_tag_dataset(&[("g", 0.25)], 8);
    let views = ds.group_views();
    let plan = plan_with(ShrinkageStrategy::NoDebias, Half::Detect, &[("g", 0.0)]);
    let out = residual_bias(
        &views,
        EffectScale::Additive,
        &GateEstimator::Means,
        &split,
        &plan,
        &residual_cfg(29),
    )
    .unwrap();
    assert_eq!(out.len(), 1);
    let fresh = gatebias_core::estimate_group_bias(
        &views[0],
        EffectScale::Additive,
        &GateEstimator::Means,
        &split,
        Half::Mitigate,
    )
    .unwrap();
    assert_eq!(out[0].value, fresh);
    assert_eq!(fresh, 0.25);
    assert!(out[0].cross_group.is_none());
}

#[test]
fn correction_matching_the_bias_cancels_exactly() {
    let (ds, split) = four_tag_dataset(&[("g", 0.25)], 8);
    let views = ds.group_views();
    let plan = plan_with(ShrinkageStrategy::Naive, Half::Detect, &[("g", 0.25)]);
    let out = residual_bias(
        &views,
        EffectScale::Additive,
        &GateEstimator::Means,
        &split,
        &plan,
        &residual_cfg(29),
    )
    .unwrap();
    assert_eq!(out[0].value, 0.0);
}

#[test]
fn mitigate_sourced_plans_are_rejected() {
    let (ds, split) = four_tag_dataset(&[("g", 0.25)], 4);
    let views = ds.group_views();
    let plan = plan_with(ShrinkageStrategy::Naive, Half::Mitigate, &[("g", 0.25)]);
    assert!(matches!(
        residual_bias(
            &views,
            EffectScale::Additive,
            &GateEstimator::Means,
            &split,
            &plan,
            &residual_cfg(29),
        ),
        Err(Error::PlanHalfLeakage)
    ));
}

#[test]
fn plans_must_cover_every_group() {
    let (ds, split) = four_tag_dataset(&[("a", 0.25), ("b", 0.0)], 4);
    let views = ds.group_views();
    let plan = plan_with(ShrinkageStrategy::Naive, Half::Detect, &[("a", 0.25)]);
    assert!(matches!(
        residual_bias(
            &views,
            EffectScale::Additive,
            &GateEstimator::Means,
            &split,
            &plan,
            &residual_cfg(29),
        ),
        Err(Error::UnknownGroupInPlan { group }) if group == "b"
    ));
}

/// All plans are scored against the same replicates, so their uncertainty is
/// common and values differ by exactly the corrections.
#[test]
fn plans_share_the_bootstrap() {
    let (ds, split) = four_tag_dataset(&[("a", 0.5), ("b", -0.25)], 8);
    let views = ds.group_views();
    let plans = vec![
        plan_with(ShrinkageStrategy::NoDebias, Half::Detect, &[("a", 0.0), ("b", 0.0)]),
        plan_with(ShrinkageStrategy::Naive, Half::Detect, &[("a", 0.5), ("b", -0.25)]),
    ];
    let out = residual_bias_many(
        &views,
        EffectScale::Additive,
        &GateEstimator::Means,
        &split,
        &plans,
        &residual_cfg(49),
    )
    .unwrap();
    assert_eq!(out.len(), 2);
    for g in 0..2 {
        assert_abs_diff_eq!(
            out[0][g].sigma_hat,
            out[1][g].sigma_hat,
            epsilon = 1e-12
        );
        let corr = plans[1].groups[&out[0][g].group].correction;
        assert_abs_diff_eq!(
            out[1][g].value,
            out[0][g].value - corr,
            epsilon = 1e-15
        );
        assert!(out[0][g].cross_group.is_some());
    }
    // Two groups: cross-residuals are antisymmetric.
    let c0 = out[1][0].cross_group.as_ref().unwrap();
    let c1 = out[1][1].cross_group.as_ref().unwrap();
    assert_abs_diff_eq!(c0.value, -c1.value, epsilon = 1e-12);
}

#[test]
fn metrics_single_group_collapse() {
    let report = distribution_metrics(
        &["g".to_string()],
        &[100],
        &[(ShrinkageStrategy::NoDebias, vec![-0.3])],
    )
    .unwrap();
    let m = &report.per_strategy["no_debias"];
    assert_eq!(m.rmse, 0.3);
    assert_eq!(m.mae, 0.3);
    assert_eq!(m.rmsed, None);
    assert_eq!(m.maed, None);
    assert_eq!(m.min_abs, 0.3);
    assert_eq!(m.max_abs, 0.3);
    assert_eq!(m.min_abs_group, "g");
    let pct = m.pct_change_vs_nodebias.as_ref().unwrap();
    assert_eq!(pct.rmse, Some(0.0));
    assert_eq!(pct.rmsed, None);
}

#[test]
fn metrics_antisymmetric_two_groups() {
    let report = distribution_metrics(
        &["a".to_string(), "b".to_string()],
        &[500, 500],
        &[(ShrinkageStrategy::Naive, vec![0.3, -0.3])],
    )
    .unwrap();
    let m = &report.per_strategy["naive"];
    assert_abs_diff_eq!(m.rmse, 0.3, epsilon = 1e-15);
    assert_abs_diff_eq!(m.mae, 0.3, epsilon = 1e-15);
    assert_abs_diff_eq!(m.rmsed.unwrap(), 0.6, epsilon = 1e-15);
    assert_abs_diff_eq!(m.maed.unwrap(), 0.6, epsilon = 1e-15);
    // Ties on |residual| resolve to the first group.
    assert_eq!(m.min_abs_group, "a");
    assert_eq!(m.max_abs_group, "a");
    // No baseline entry: no percent changes.
    assert!(m.pct_change_vs_nodebias.is_none());
}

#[test]
fn metrics_all_zero() {
    let report = distribution_metrics(
        &["a".to_string(), "b".to_string()],
        &[10, 20],
        &[
            (ShrinkageStrategy::NoDebias, vec![0.0, 0.0]),
            (ShrinkageStrategy::Naive, vec![0.0, 0.0]),
        ],
    )
    .unwrap();
    for m in report.per_strategy.values() {
        assert_eq!(m.rmse, 0.0);
        assert_eq!(m.mae, 0.0);
        assert_eq!(m.rmsed, Some(0.0));
        let pct = m.pct_change_vs_nodebias.as_ref().unwrap();
        assert_eq!(pct.rmse, Some(0.0));
        assert_eq!(pct.max_abs, Some(0.0));
    }
}

#[test]
fn pct_change_rules() {
    // Improving from zero baseline is undefined; worsening from nonzero is a
    // plain ratio.
    let report = distribution_metrics(
        &["g".to_string()],
        &[10],
        &[
            (ShrinkageStrategy::NoDebias, vec![0.0]),
            (ShrinkageStrategy::Naive, vec![0.1]),
        ],
    )
    .unwrap();
    let naive = &report.per_strategy["naive"];
    assert_eq!(naive.pct_change_vs_nodebias.as_ref().unwrap().rmse, None);

    let report = distribution_metrics(
        &["g".to_string()],
        &[10],
        &[
            (ShrinkageStrategy::NoDebias, vec![0.2]),
            (ShrinkageStrategy::Naive, vec![0.1]),
        ],
    )
    .unwrap();
    let naive = &report.per_strategy["naive"];
    assert_abs_diff_eq!(
        naive.pct_change_vs_nodebias.as_ref().unwrap().rmse.unwrap(),
        -50.0,
        epsilon = 1e-12
    );
}

#[test]
fn metrics_reject_misaligned_inputs() {
    assert!(distribution_metrics(&[], &[], &[]).is_err());
    assert!(distribution_metrics(
        &["a".to_string()],
        &[1, 2],
        &[(ShrinkageStrategy::NoDebias, vec![0.0])]
    )
    .is_err());
    assert!(distribution_metrics(
        &["a".to_string()],
        &[1],
        &[(ShrinkageStrategy::NoDebias, vec![0.0, 1.0])]
    )
    .is_err());
}

/// The naive strategy's residual averages to zero when the correction is an
/// independent unbiased estimate of the same bias.
#[test]
fn naive_residuals_center_on_zero() {
    let mut rng = gatebias_core::stats::seeded_rng(5);
    let mut values = Vec::new();
    for _ in 0..40 {
        let mut rows = Vec::new();
        let mut pattern = String::new();
        for tag in ['D', 'd', 'M', 'm'] {
            for t in [0u8, 1] {
                for _ in 0..40 {
                    let noise: f64 = rng.random_range(-0.5..0.5);
                    rows.push(common::row("g", t, f64::from(t) + noise, 1.3));
                    pattern.push(tag);
                }
            }
        }
        let ds = common::dataset(EffectScale::Additive, rows);
        let split = common::manual_split(common::tags(&pattern));
        let views = ds.group_views();
        let b_detect = gatebias_core::estimate_group_bias(
            &views[0],
            EffectScale::Additive,
            &GateEstimator::Means,
            &split,
            Half::Detect,
        )
        .unwrap();
        let plan = plan_with(ShrinkageStrategy::Naive, Half::Detect, &[("g", b_detect)]);
        let out = residual_bias(
            &views,
            EffectScale::Additive,
            &GateEstimator::Means,
            &split,
            &plan,
            &residual_cfg(2),
        )
        .unwrap();
        values.push(out[0].value);
    }
    let mean = gatebias_core::stats::mean(&values);
    let se = gatebias_core::stats::sample_sd(&values) / (values.len() as f64).sqrt();
    assert!(
        mean.abs() <= 3.0 * se,
        "mean residual {mean} exceeds 3 SE {se}"
    );
}

fn eval_dataset(bias_a: f64, n_per_arm: usize, seed: u64) -> Dataset {
    let mut rng = gatebias_core::stats::seeded_rng(seed);
    let mut rows = Vec::new();
    for (group, bias) in [("a", bias_a), ("b", 0.0)] {
        for t in [0u8, 1] {
            for _ in 0..n_per_arm {
                let noise: f64 = rng.random_range(-0.5..0.5);
                rows.push(common::row(group, t, f64::from(t) + noise, 1.0 + bias));
            }
        }
    }
    common::dataset(EffectScale::Additive, rows)
}

#[test]
fn eval_defaults_follow_the_protocol() {
    let cfg = EvalConfig::default();
    assert_eq!(cfg.folds, 10);
    assert_eq!(cfg.n_boot, 50);
    assert_eq!(cfg.alpha, 0.05);
    assert!(cfg.bonferroni);
    assert_eq!(cfg.strategies.len(), 4);
}

#[test]
fn eval_baseline_only_run() {
    let ds = eval_dataset(0.4, 60, 3);
    let cfg = EvalConfig {
        strategies: vec![],
        n_boot: 19,
        folds: 2,
        ..EvalConfig::default()
    };
    let out = evaluate_end_to_end(&ds, &cfg).unwrap();
    // 2 groups, Bonferroni over 4|G| = 8 tests.
    assert_eq!(out.alpha_adjusted, 0.00625);
    assert_eq!(out.folds, 2);
    assert_eq!(out.metrics.per_strategy.len(), 1);
    let m = &out.metrics.per_strategy["no_debias"];
    let pct = m.pct_change_vs_nodebias.as_ref().unwrap();
    assert_eq!(pct.rmse, Some(0.0));
    assert_eq!(pct.mae, Some(0.0));
    assert!(m.rmse_sd.is_some());
    // The baseline plan never corrects.
    assert!(out.plans["no_debias"].groups.values().all(|c| c.gamma == 0.0));
    // First-fold residuals equal the fresh biases (gamma = 0).
    assert_eq!(out.residuals["no_debias"].len(), 2);
    assert!(out.metrics.groups == vec!["a".to_string(), "b".to_string()]);
}

#[test]
fn eval_adjusts_mean_error_alpha_and_dedupes() {
    let ds = eval_dataset(0.4, 60, 4);
    let cfg = EvalConfig {
        strategies: vec![
            ShrinkageStrategy::MeanError { alpha: 0.05 },
            ShrinkageStrategy::MeanError { alpha: 0.05 },
            ShrinkageStrategy::NoDebias,
        ],
        n_boot: 19,
        folds: 1,
        ..EvalConfig::default()
    };
    let out = evaluate_end_to_end(&ds, &cfg).unwrap();
    assert_eq!(out.metrics.per_strategy.len(), 2);
    match out.plans["mean_error"].strategy {
        ShrinkageStrategy::MeanError { alpha } => {
            assert_abs_diff_eq!(alpha, 0.00625, epsilon = 1e-15)
        }
        other => panic!("unexpected strategy {other}"),
    }
    // Single fold: no fold-to-fold spread.
    assert_eq!(out.metrics.per_strategy["mean_error"].rmse_sd, None);
}

#[test]
fn eval_detects_and_corrects_a_planted_bias() {
    let ds = eval_dataset(0.5, 150, 9);
    let cfg = EvalConfig {
        strategies: vec![ShrinkageStrategy::Naive],
        n_boot: 39,
        folds: 3,
        ..EvalConfig::default()
    };
    let out = evaluate_end_to_end(&ds, &cfg).unwrap();
    // Group a's bias is detected in fold 0 at the adjusted level.
    let a = &out.detection.per_group[0];
    assert_eq!(a.group, "a");
    assert!(a.detected, "z = {}", a.z_stat);
    assert!((a.b_hat - 0.5).abs() < 0.15);
    // Naive correction shrinks the residual RMSE against the baseline.
    let naive = &out.metrics.per_strategy["naive"];
    let base = &out.metrics.per_strategy["no_debias"];
    assert!(naive.rmse < base.rmse);
    let pct = naive.pct_change_vs_nodebias.as_ref().unwrap();
    assert!(pct.rmse.unwrap() < 0.0);

    // Determinism end to end.
    let again = evaluate_end_to_end(&ds, &cfg).unwrap();
    assert_eq!(out.metrics.per_strategy, again.metrics.per_strategy);
    assert_eq!(out.detection.per_group, again.detection.per_group);
}

#[test]
fn eval_rejects_zero_folds() {
    let ds = eval_dataset(0.0, 10, 0);
    let cfg = EvalConfig {
        folds: 0,
        ..EvalConfig::default()
    };
    assert!(matches!(
        evaluate_end_to_end(&ds, &cfg),
        Err(Error::InvalidConfig { .. })
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Metrics ignore group labels and scale linearly with the residuals.
    #[test]
    fn metrics_relabel_and_scale_invariance(
        residuals in proptest::collection::vec(-2.0f64..2.0, 2..10),
        sizes in proptest::collection::vec(10usize..1000, 2..10),
        c in prop_oneof![-4.0f64..-0.25, 0.25f64..4.0],
    ) {
        let n = residuals.len().min(sizes.len());
        let residuals = &residuals[..n];
        let sizes = &sizes[..n];
        let groups: Vec<String> = (0..n).map(|i| format!("g{i}")).collect();
        let base = distribution_metrics(
            &groups,
            sizes,
            &[(ShrinkageStrategy::Naive, residuals.to_vec())],
        )
        .unwrap();
        let b = &base.per_strategy["naive"];

        // Reversal relabels the groups: only labels move.
        let rev_groups: Vec<String> = groups.iter().rev().cloned().collect();
        let rev_sizes: Vec<usize> = sizes.iter().rev().copied().collect();
        let rev_res: Vec<f64> = residuals.iter().rev().copied().collect();
        let rev = distribution_metrics(
            &rev_groups,
            &rev_sizes,
            &[(ShrinkageStrategy::Naive, rev_res)],
        )
        .unwrap();
        let r = &rev.per_strategy["naive"];
        prop_assert!((b.rmse - r.rmse).abs() <= 1e-12);
        prop_assert!((b.mae - r.mae).abs() <= 1e-12);
        prop_assert!((b.rmsed.unwrap() - r.rmsed.unwrap()).abs() <= 1e-12);
        prop_assert!((b.min_abs - r.min_abs).abs() <= 1e-12);

        // Scaling all residuals by c scales every metric by |c|.
        let scaled: Vec<f64> = residuals.iter().map(|x| c * x).collect();
        let sc = distribution_metrics(
            &groups,
            sizes,
            &[(ShrinkageStrategy::Naive, scaled)],
        )
        .unwrap();
        let s = &sc.per_strategy["naive"];
        let k = c.abs();
        prop_assert!((s.rmse - k * b.rmse).abs() <= 1e-9 * k.max(1.0));
        prop_assert!((s.mae - k * b.mae).abs() <= 1e-9 * k.max(1.0));
        prop_assert!((s.maed.unwrap() - k * b.maed.unwrap()).abs() <= 1e-9 * k.max(1.0));
        prop_assert!((s.max_abs - k * b.max_abs).abs() <= 1e-9 * k.max(1.0));
    }
}
