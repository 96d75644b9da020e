//! Out-of-sample scoring of correction plans: residual bias on the mitigation
//! half, residual-distribution metrics, and the end-to-end evaluation
//! protocol.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, EffectScale, FractionSpec, GroupView, Half, SplitAssignment};
use crate::detection::{
    bootstrap_moments, cross_group_bias, detect_groups, estimate_group_bias, wald_test,
    BiasEstimate, BiasMoments, CrossGroupBias, DetectionConfig, DetectionOutcome,
};
use crate::error::{Error, Result, Warning};
use crate::gate::GateEstimator;
use crate::mitigation::{build_plan, DebiasPlan, ShrinkageStrategy};
use crate::stats;

/// Residual bias of a corrected model on the mitigation half: the fresh bias
/// estimate minus the plan's correction, with bootstrap uncertainty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualBias {
    pub group: String,
    pub strategy: ShrinkageStrategy,
    /// B̃_g − γ̂_g·B̂_g.
    pub value: f64,
    /// Bootstrap SE of the fresh estimate; the fixed correction does not move
    /// it.
    pub sigma_hat: f64,
    pub z_stat: f64,
    pub p_value: f64,
    pub detected: bool,
    pub alpha: f64,
    pub n_boot: usize,
    pub n_failed: usize,
    pub degenerate_se: bool,
    /// Contrast against the size-weighted residual of the other groups.
    pub cross_group: Option<CrossGroupBias>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualConfig {
    pub alpha: f64,
    pub n_boot: usize,
    pub seed: u64,
}

impl Default for ResidualConfig {
    fn default() -> Self {
        ResidualConfig {
            alpha: 0.05,
            n_boot: 999,
            seed: 0,
        }
    }
}

/// Residual bias for one plan. See [`residual_bias_many`] for several plans
/// sharing one bootstrap.
pub fn residual_bias(
    views: &[GroupView<'_>],
    scale: EffectScale,
    estimator: &GateEstimator,
    split: &SplitAssignment,
    plan: &DebiasPlan,
    cfg: &ResidualConfig,
) -> Result<Vec<ResidualBias>> {
    residual_bias_many(views, scale, estimator, split, std::slice::from_ref(plan), cfg)
        .map(|mut v| v.pop().expect("one plan in, one result out"))
}

/// Residual bias for several plans over the same groups.
///
/// The fresh mitigation-half bias B̃_g and its bootstrap replicates are
/// computed once per group; each plan only shifts them by its fixed
/// correction, so every plan is scored against identical resamples and the
/// reported σ̂ is common across plans.
pub fn residual_bias_many(
    views: &[GroupView<'_>],
    scale: EffectScale,
    estimator: &GateEstimator,
    split: &SplitAssignment,
    plans: &[DebiasPlan],
    cfg: &ResidualConfig,
) -> Result<Vec<Vec<ResidualBias>>> {
    if plans.iter().any(|p| p.source_half == Half::Mitigate) {
        return Err(Error::PlanHalfLeakage);
    }
    if !(cfg.alpha.is_finite() && cfg.alpha > 0.0 && cfg.alpha < 1.0) {
        return Err(Error::InvalidAlpha { alpha: cfg.alpha });
    }
    let mut fresh: Vec<(f64, BiasMoments, usize)> = Vec::with_capacity(views.len());
    for view in views {
        for plan in plans {
            plan.correction_for(&view.group)?;
        }
        let b_tilde = estimate_group_bias(view, scale, estimator, split, Half::Mitigate)?;
        let moments = bootstrap_moments(
            view,
            scale,
            estimator,
            split,
            Half::Mitigate,
            cfg.n_boot,
            cfg.seed,
        )?;
        let n_half = view.restrict_half(split, Half::Mitigate).n();
        fresh.push((b_tilde, moments, n_half));
    }
    let sizes: Vec<usize> = fresh.iter().map(|(_, _, n)| *n).collect();

    let mut out = Vec::with_capacity(plans.len());
    for plan in plans {
        let mut shifted: Vec<BiasEstimate> = Vec::with_capacity(views.len());
        let mut shifted_moments: Vec<BiasMoments> = Vec::with_capacity(views.len());
        for (view, (b_tilde, moments, n_half)) in views.iter().zip(&fresh) {
            let corr = plan.correction_for(&view.group)?;
            let replicates: Vec<Option<f64>> = moments
                .replicates
                .iter()
                .map(|r| r.map(|b| b - corr))
                .collect();
            let m = crate::detection::moments_from_replicates(replicates);
            let est = wald_test(&view.group, b_tilde - corr, &m, *n_half, cfg.alpha)?;
            shifted.push(est);
            shifted_moments.push(m);
        }
        let cross = if views.len() >= 2 {
            cross_group_bias(&shifted, &sizes, &shifted_moments, cfg.alpha)?
                .into_iter()
                .map(Some)
                .collect()
        } else {
            vec![None; views.len()]
        };
        let residuals: Vec<ResidualBias> = shifted
            .into_iter()
            .zip(cross)
            .map(|(est, cg)| ResidualBias {
                group: est.group,
                strategy: plan.strategy,
                value: est.b_hat,
                sigma_hat: est.sigma_hat,
                z_stat: est.z_stat,
                p_value: est.p_value,
                detected: est.detected,
                alpha: est.alpha,
                n_boot: est.n_boot,
                n_failed: est.n_failed,
                degenerate_se: est.degenerate_se,
                cross_group: cg,
            })
            .collect();
        out.push(residuals);
    }
    Ok(out)
}

/// Summary of a strategy's residuals across groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyMetrics {
    /// Root mean square of per-group residuals.
    pub rmse: f64,
    /// Mean absolute per-group residual.
    pub mae: f64,
    /// RMSE of each group's residual minus the size-weighted residual of the
    /// others; absent with a single group.
    pub rmsed: Option<f64>,
    pub maed: Option<f64>,
    pub min_abs: f64,
    pub max_abs: f64,
    pub min_abs_group: String,
    pub max_abs_group: String,
    /// Percent change of each metric against the no-debias baseline; absent
    /// when a changed metric starts from a zero baseline.
    pub pct_change_vs_nodebias: Option<PctChange>,
    /// Fold-to-fold standard deviations when averaged over folds.
    pub rmse_sd: Option<f64>,
    pub mae_sd: Option<f64>,
}

/// Percent changes (in percent units) of every metric versus no debiasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PctChange {
    pub rmse: Option<f64>,
    pub mae: Option<f64>,
    pub rmsed: Option<f64>,
    pub maed: Option<f64>,
    pub min_abs: Option<f64>,
    pub max_abs: Option<f64>,
}

/// Residual metrics per strategy, keyed by strategy identifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_strategy: BTreeMap<String, StrategyMetrics>,
    pub folds: usize,
    pub groups: Vec<String>,
}

fn pct(m0: f64, m: f64) -> Option<f64> {
    if m0 == 0.0 {
        if m == 0.0 {
            Some(0.0)
        } else {
            None
        }
    } else {
        Some(100.0 * (m / m0 - 1.0))
    }
}

struct RawMetrics {
    rmse: f64,
    mae: f64,
    rmsed: Option<f64>,
    maed: Option<f64>,
    min_abs: f64,
    max_abs: f64,
    min_abs_group: String,
    max_abs_group: String,
}

fn raw_metrics(groups: &[String], sizes: &[usize], residuals: &[f64]) -> RawMetrics {
    let g = residuals.len();
    let rmse = (residuals.iter().map(|r| r * r).sum::<f64>() / g as f64).sqrt();
    let mae = residuals.iter().map(|r| r.abs()).sum::<f64>() / g as f64;
    let (rmsed, maed) = if g >= 2 {
        let total: f64 = sizes.iter().map(|&s| s as f64).sum();
        let weighted: f64 = residuals
            .iter()
            .zip(sizes)
            .map(|(r, &s)| r * s as f64)
            .sum();
        let diffs: Vec<f64> = residuals
            .iter()
            .zip(sizes)
            .map(|(r, &s)| {
                let rest = (weighted - r * s as f64) / (total - s as f64);
                r - rest
            })
            .collect();
        (
            Some((diffs.iter().map(|d| d * d).sum::<f64>() / g as f64).sqrt()),
            Some(diffs.iter().map(|d| d.abs()).sum::<f64>() / g as f64),
        )
    } else {
        (None, None)
    };
    let mut min_i = 0usize;
    let mut max_i = 0usize;
    for i in 1..g {
        if residuals[i].abs() < residuals[min_i].abs() {
            min_i = i;
        }
        if residuals[i].abs() > residuals[max_i].abs() {
            max_i = i;
        }
    }
    RawMetrics {
        rmse,
        mae,
        rmsed,
        maed,
        min_abs: residuals[min_i].abs(),
        max_abs: residuals[max_i].abs(),
        min_abs_group: groups[min_i].clone(),
        max_abs_group: groups[max_i].clone(),
    }
}

/// Residual-distribution metrics for each strategy, with percent changes
/// versus the `no_debias` entry when present.
///
/// `per_strategy` holds per-group residuals aligned with `groups`/`sizes`.
pub fn distribution_metrics(
    groups: &[String],
    sizes: &[usize],
    per_strategy: &[(ShrinkageStrategy, Vec<f64>)],
) -> Result<MetricsReport> {
    if groups.is_empty() {
        return Err(Error::InvalidConfig {
            msg: "metrics need at least one group".into(),
        });
    }
    if groups.len() != sizes.len() {
        return Err(Error::InvalidConfig {
            msg: "metrics groups and sizes must be aligned".into(),
        });
    }
    for (s, r) in per_strategy {
        if r.len() != groups.len() {
            return Err(Error::InvalidConfig {
                msg: format!("strategy {s} has {} residuals for {} groups", r.len(), groups.len()),
            });
        }
    }
    let baseline = per_strategy
        .iter()
        .find(|(s, _)| matches!(s, ShrinkageStrategy::NoDebias))
        .map(|(_, r)| raw_metrics(groups, sizes, r));
    let mut report = BTreeMap::new();
    for (strategy, residuals) in per_strategy {
        let m = raw_metrics(groups, sizes, residuals);
        let pct_change = baseline.as_ref().map(|b| PctChange {
            rmse: pct(b.rmse, m.rmse),
            mae: pct(b.mae, m.mae),
            rmsed: match (b.rmsed, m.rmsed) {
                (Some(b0), Some(m1)) => pct(b0, m1),
                _ => None,
            },
            maed: match (b.maed, m.maed) {
                (Some(b0), Some(m1)) => pct(b0, m1),
                _ => None,
            },
            min_abs: pct(b.min_abs, m.min_abs),
            max_abs: pct(b.max_abs, m.max_abs),
        });
        report.insert(
            strategy.key().to_string(),
            StrategyMetrics {
                rmse: m.rmse,
                mae: m.mae,
                rmsed: m.rmsed,
                maed: m.maed,
                min_abs: m.min_abs,
                max_abs: m.max_abs,
                min_abs_group: m.min_abs_group,
                max_abs_group: m.max_abs_group,
                pct_change_vs_nodebias: pct_change,
                rmse_sd: None,
                mae_sd: None,
            },
        );
    }
    Ok(MetricsReport {
        per_strategy: report,
        folds: 1,
        groups: groups.to_vec(),
    })
}

/// End-to-end evaluation configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Strategies to score; the no-debias baseline is always included.
    pub strategies: Vec<ShrinkageStrategy>,
    /// Family-wise level; individual tests run at α divided by the number of
    /// tests (4·|groups|: per-group and cross-group on both halves) when
    /// `bonferroni` is set.
    pub alpha: f64,
    pub n_boot: usize,
    /// Independent re-splits; metrics are averaged across them.
    pub folds: usize,
    pub seed: u64,
    pub estimation_fractions: FractionSpec,
    pub estimator: GateEstimator,
    pub bonferroni: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            strategies: vec![
                ShrinkageStrategy::Naive,
                ShrinkageStrategy::MeanError { alpha: 0.05 },
                ShrinkageStrategy::MsePlus,
                ShrinkageStrategy::MseMinus,
            ],
            alpha: 0.05,
            n_boot: 50,
            folds: 10,
            seed: 0,
            estimation_fractions: FractionSpec::Uniform(0.5),
            estimator: GateEstimator::Means,
            bonferroni: true,
        }
    }
}

/// Full evaluation output. Detailed detection and residual objects come from
/// the first fold; metrics aggregate all folds.
#[derive(Debug, Clone, Serialize)]
pub struct EvalOutcome {
    pub detection: DetectionOutcome,
    pub plans: BTreeMap<String, DebiasPlan>,
    pub residuals: BTreeMap<String, Vec<ResidualBias>>,
    pub metrics: MetricsReport,
    pub alpha_adjusted: f64,
    pub folds: usize,
    pub warnings: Vec<Warning>,
}

/// Runs the full protocol on one dataset: split, detect, build one plan per
/// strategy, and score residual bias out of sample; repeated over `folds`
/// independent splits with metrics averaged.
pub fn evaluate_end_to_end(ds: &Dataset, cfg: &EvalConfig) -> Result<EvalOutcome> {
    if cfg.folds == 0 {
        return Err(Error::InvalidConfig {
            msg: "need at least one fold".into(),
        });
    }
    let views = ds.group_views();
    let n_groups = views.len();
    let n_tests = if cfg.bonferroni { 4 * n_groups.max(1) } else { 1 };
    let alpha_adjusted = crate::detection::bonferroni_adjust(cfg.alpha, n_tests)?;

    let mut strategies: Vec<ShrinkageStrategy> = vec![ShrinkageStrategy::NoDebias];
    for s in &cfg.strategies {
        let adjusted = match s {
            // The decision-threshold test inside MeanError is one of the
            // family's tests and shares its adjustment.
            ShrinkageStrategy::MeanError { alpha } => ShrinkageStrategy::MeanError {
                alpha: crate::detection::bonferroni_adjust(*alpha, n_tests)?,
            },
            other => *other,
        };
        if !strategies.contains(&adjusted) {
            strategies.push(adjusted);
        }
    }

    let groups: Vec<String> = views.iter().map(|v| v.group.clone()).collect();
    let sizes: Vec<usize> = views.iter().map(|v| v.n()).collect();

    let mut fold_metrics: Vec<BTreeMap<String, StrategyMetrics>> = Vec::with_capacity(cfg.folds);
    let mut first: Option<(DetectionOutcome, BTreeMap<String, DebiasPlan>, BTreeMap<String, Vec<ResidualBias>>)> =
        None;
    for fold in 0..cfg.folds {
        let fold_seed = stats::mix(cfg.seed, stats::mix(stats::CTX_FOLD, fold as u64));
        let split = crate::data::four_way_split(ds, &cfg.estimation_fractions, fold_seed)?;
        let det_cfg = DetectionConfig {
            alpha: cfg.alpha,
            n_boot: cfg.n_boot,
            seed: fold_seed,
            n_tests: Some(n_tests),
        };
        let detection = detect_groups(&views, ds.scale, &cfg.estimator, &split, Half::Detect, &det_cfg)?;
        let plans: Vec<DebiasPlan> = strategies
            .iter()
            .map(|s| build_plan(*s, &detection.per_group, Half::Detect))
            .collect::<Result<_>>()?;
        let res_cfg = ResidualConfig {
            alpha: alpha_adjusted,
            n_boot: cfg.n_boot,
            seed: fold_seed,
        };
        let residuals =
            residual_bias_many(&views, ds.scale, &cfg.estimator, &split, &plans, &res_cfg)?;
        let per_strategy: Vec<(ShrinkageStrategy, Vec<f64>)> = plans
            .iter()
            .zip(&residuals)
            .map(|(p, r)| (p.strategy, r.iter().map(|x| x.value).collect()))
            .collect();
        let metrics = distribution_metrics(&groups, &sizes, &per_strategy)?;
        fold_metrics.push(metrics.per_strategy);
        if first.is_none() {
            let plan_map: BTreeMap<String, DebiasPlan> = plans
                .iter()
                .map(|p| (p.strategy.key().to_string(), p.clone()))
                .collect();
            let residual_map: BTreeMap<String, Vec<ResidualBias>> = plans
                .iter()
                .zip(residuals)
                .map(|(p, r)| (p.strategy.key().to_string(), r))
                .collect();
            first = Some((detection, plan_map, residual_map));
        }
    }
    let (detection, plans, residuals) = first.expect("at least one fold ran");

    // Average metrics across folds; percent changes recomputed from the
    // averaged metrics so they stay internally consistent.
    let mut per_strategy = BTreeMap::new();
    let keys: Vec<String> = fold_metrics[0].keys().cloned().collect();
    for key in keys {
        let col: Vec<&StrategyMetrics> = fold_metrics.iter().map(|m| &m[&key]).collect();
        let rmses: Vec<f64> = col.iter().map(|m| m.rmse).collect();
        let maes: Vec<f64> = col.iter().map(|m| m.mae).collect();
        let mean_opt = |f: &dyn Fn(&StrategyMetrics) -> Option<f64>| -> Option<f64> {
            let vals: Option<Vec<f64>> = col.iter().map(|m| f(m)).collect();
            vals.map(|v| stats::mean(&v))
        };
        let agg = StrategyMetrics {
            rmse: stats::mean(&rmses),
            mae: stats::mean(&maes),
            rmsed: mean_opt(&|m| m.rmsed),
            maed: mean_opt(&|m| m.maed),
            min_abs: stats::mean(&col.iter().map(|m| m.min_abs).collect::<Vec<_>>()),
            max_abs: stats::mean(&col.iter().map(|m| m.max_abs).collect::<Vec<_>>()),
            min_abs_group: col[0].min_abs_group.clone(),
            max_abs_group: col[0].max_abs_group.clone(),
            pct_change_vs_nodebias: None,
            rmse_sd: if cfg.folds >= 2 {
                Some(stats::sample_sd(&rmses))
            } else {
                None
            },
            mae_sd: if cfg.folds >= 2 {
                Some(stats::sample_sd(&maes))
            } else {
                None
            },
        };
        per_strategy.insert(key, agg);
    }
    let base = per_strategy
        .get(ShrinkageStrategy::NoDebias.key())
        .cloned()
        .expect("baseline always evaluated");
    for m in per_strategy.values_mut() {
        m.pct_change_vs_nodebias = Some(PctChange {
            rmse: pct(base.rmse, m.rmse),
            mae: pct(base.mae, m.mae),
            rmsed: match (base.rmsed, m.rmsed) {
                (Some(b0), Some(m1)) => pct(b0, m1),
                _ => None,
            },
            maed: match (base.maed, m.maed) {
                (Some(b0), Some(m1)) => pct(b0, m1),
                _ => None,
            },
            min_abs: pct(base.min_abs, m.min_abs),
            max_abs: pct(base.max_abs, m.max_abs),
        });
    }

    let warnings = detection.warnings.clone();
    Ok(EvalOutcome {
        detection,
        plans,
        residuals,
        metrics: MetricsReport {
            per_strategy,
            folds: cfg.folds,
            groups,
        },
        alpha_adjusted,
        folds: cfg.folds,
        warnings,
    })
}
