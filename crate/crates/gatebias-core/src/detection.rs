//! Group bias estimation and Wald testing: model-implied effect minus
//! experimental effect, with stratified-bootstrap uncertainty.

use rand::RngExt;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{EffectScale, GroupView, Half, SplitAssignment};
use crate::error::{Error, Result, Warning};
use crate::gate::{estimate_collapse_weights, model_implied_gate, GateEstimator};
use crate::stats;

/// How many retries a failed bootstrap replicate gets before it is counted as
/// failed.
const MAX_REPLICATE_ATTEMPTS: usize = 10;

/// Share of failed replicates beyond which the bootstrap is rejected.
const MAX_FAILURE_SHARE: f64 = 0.10;

/// Per-group bias estimate with its Wald test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasEstimate {
    pub group: String,
    /// Model-implied GATE minus experimental GATE on one half.
    pub b_hat: f64,
    /// Bootstrap standard error (n−1 denominator over replicates).
    pub sigma_hat: f64,
    /// Plain mean of squared bootstrap replicates.
    pub m2_hat: f64,
    /// Mean of bootstrap replicates.
    pub rep_mean: f64,
    pub z_stat: f64,
    pub p_value: f64,
    pub detected: bool,
    /// Possibly multiplicity-adjusted level this test was run at.
    pub alpha: f64,
    /// Rows in the half the estimate was computed on.
    pub n: usize,
    pub n_boot: usize,
    pub n_failed: usize,
    /// All replicates were identical; the test cannot reject.
    pub degenerate_se: bool,
}

/// Bootstrap replicate summary for one group. `replicates` keeps failed
/// entries as `None` so replicates stay index-paired across groups.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasMoments {
    pub sigma_hat: f64,
    pub m2_hat: f64,
    pub rep_mean: f64,
    pub n_failed: usize,
    pub replicates: Vec<Option<f64>>,
}

/// One group's bias relative to the size-weighted rest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossGroupBias {
    pub group: String,
    /// b̂_g − Σ_{k≠g} N_k b̂_k / Σ_{k≠g} N_k.
    pub value: f64,
    pub sigma_hat: f64,
    pub z_stat: f64,
    pub p_value: f64,
    pub detected: bool,
    pub alpha: f64,
    pub degenerate_se: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionConfig {
    /// Family-wise level before multiplicity adjustment.
    pub alpha: f64,
    pub n_boot: usize,
    pub seed: u64,
    /// Number of tests for the Bonferroni correction; `None` uses 2·|groups|
    /// (one per-group test plus one cross-group test each).
    pub n_tests: Option<usize>,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        DetectionConfig {
            alpha: 0.05,
            n_boot: 999,
            seed: 0,
            n_tests: None,
        }
    }
}

/// Detection results across groups at a common adjusted level.
#[derive(Debug, Clone, Serialize)]
pub struct DetectionOutcome {
    pub per_group: Vec<BiasEstimate>,
    pub cross_group: Vec<CrossGroupBias>,
    /// Level each individual test was run at after adjustment.
    pub alpha_adjusted: f64,
    pub warnings: Vec<Warning>,
    #[serde(skip)]
    pub moments: Vec<BiasMoments>,
}

/// Bonferroni-adjusted per-test level α/n.
pub fn bonferroni_adjust(alpha: f64, n_tests: usize) -> Result<f64> {
    if !(alpha.is_finite() && alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidAlpha { alpha });
    }
    if n_tests == 0 {
        return Err(Error::InvalidConfig {
            msg: "Bonferroni adjustment needs at least one test".into(),
        });
    }
    Ok(alpha / n_tests as f64)
}

/// Point estimate of the group bias on one half: the model-implied GATE over
/// the half's prediction subset minus the experimental GATE over its
/// estimation subset.
pub fn estimate_group_bias(
    view: &GroupView<'_>,
    scale: EffectScale,
    estimator: &GateEstimator,
    split: &SplitAssignment,
    half: Half,
) -> Result<f64> {
    let predict = view.restrict(split, half.predict_tag());
    let estimate = view.restrict(split, half.estimate_tag());
    if predict.n() == 0 || estimate.n() == 0 {
        return Err(Error::EmptySplit {
            group: view.group.clone(),
        });
    }
    let weights = estimate_collapse_weights(&predict, scale)?;
    let model = model_implied_gate(&predict, &weights, scale)?;
    let experimental = estimator.estimate(&estimate, scale)?;
    Ok(model.value - experimental.value)
}

/// Moment summaries from raw replicates: σ̂ is the (n−1)-denominator sample SD,
/// m2 the plain mean of squares, both over successful replicates.
pub fn moments_from_replicates(replicates: Vec<Option<f64>>) -> BiasMoments {
    let ok: Vec<f64> = replicates.iter().filter_map(|r| *r).collect();
    let n_failed = replicates.len() - ok.len();
    let (sigma_hat, m2_hat, rep_mean) = if ok.is_empty() {
        (0.0, 0.0, 0.0)
    } else {
        (
            stats::sample_sd(&ok),
            ok.iter().map(|b| b * b).sum::<f64>() / ok.len() as f64,
            stats::mean(&ok),
        )
    };
    BiasMoments {
        sigma_hat,
        m2_hat,
        rep_mean,
        n_failed,
        replicates,
    }
}

fn boot_ctx(half: Half) -> u64 {
    match half {
        Half::Detect => stats::CTX_BOOT_DETECT,
        Half::Mitigate => stats::CTX_BOOT_MITIGATE,
    }
}

/// Stratified bootstrap of the group-bias statistic.
///
/// Each replicate resamples rows with replacement within the four
/// (subset, arm) strata of the chosen half, then recomputes the full bias
/// pipeline. Failed replicates are retried with fresh draws up to
/// [`MAX_REPLICATE_ATTEMPTS`] times; if more than [`MAX_FAILURE_SHARE`] of
/// replicates still fail the bootstrap errors out. Replicates are computed in
/// parallel and reduced in index order, so results are reproducible.
pub fn bootstrap_moments(
    view: &GroupView<'_>,
    scale: EffectScale,
    estimator: &GateEstimator,
    split: &SplitAssignment,
    half: Half,
    n_boot: usize,
    seed: u64,
) -> Result<BiasMoments> {
    if n_boot < 2 {
        return Err(Error::InvalidConfig {
            msg: format!("bootstrap needs at least 2 replicates, got {n_boot}"),
        });
    }
    let ds = view.dataset();
    // Strata in fixed order: (estimate, control), (estimate, treated),
    // (predict, control), (predict, treated).
    let tags = [half.estimate_tag(), half.predict_tag()];
    let mut strata: Vec<Vec<usize>> = vec![Vec::new(); 4];
    for &i in &view.indices {
        let tag = split.tags[i];
        if tag.half() != half {
            continue;
        }
        let t = if tag == tags[0] { 0 } else { 1 };
        strata[2 * t + ds.rows[i].treatment as usize].push(i);
    }
    if strata.iter().all(|s| s.is_empty()) {
        return Err(Error::EmptySplit {
            group: view.group.clone(),
        });
    }
    let group_seed = stats::mix(
        stats::mix(seed, boot_ctx(half)),
        stats::label_hash(&view.group),
    );
    let total: usize = strata.iter().map(Vec::len).sum();
    let replicates: Vec<Option<f64>> = (0..n_boot)
        .into_par_iter()
        .map(|r| {
            let rep_seed = stats::mix(group_seed, r as u64);
            for attempt in 0..MAX_REPLICATE_ATTEMPTS {
                let mut rng = stats::seeded_rng(stats::mix(rep_seed, attempt as u64));
                let mut indices = Vec::with_capacity(total);
                for stratum in &strata {
                    for _ in 0..stratum.len() {
                        indices.push(stratum[rng.random_range(0..stratum.len())]);
                    }
                }
                let rep_view = GroupView::from_indices(ds, view.group.clone(), indices);
                if let Ok(b) = estimate_group_bias(&rep_view, scale, estimator, split, half) {
                    return Some(b);
                }
            }
            None
        })
        .collect();
    let moments = moments_from_replicates(replicates);
    if (moments.n_failed as f64) > MAX_FAILURE_SHARE * n_boot as f64 {
        return Err(Error::BootstrapDegenerate {
            group: view.group.clone(),
            n_failed: moments.n_failed,
            n_boot,
        });
    }
    Ok(moments)
}

/// Completes a bias estimate with its two-sided Wald test at level `alpha`.
///
/// A zero standard error never rejects: the test reports z = 0, p = 1, and
/// sets `degenerate_se` so callers can warn instead of crashing.
pub fn wald_test(
    group: &str,
    b_hat: f64,
    moments: &BiasMoments,
    n: usize,
    alpha: f64,
) -> Result<BiasEstimate> {
    if !(alpha.is_finite() && alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidAlpha { alpha });
    }
    let degenerate = moments.sigma_hat == 0.0;
    let (z_stat, p_value, detected) = if degenerate {
        (0.0, 1.0, false)
    } else {
        let z = b_hat / moments.sigma_hat;
        (
            z,
            stats::two_sided_p(z),
            z.abs() >= stats::z_crit(alpha),
        )
    };
    Ok(BiasEstimate {
        group: group.to_string(),
        b_hat,
        sigma_hat: moments.sigma_hat,
        m2_hat: moments.m2_hat,
        rep_mean: moments.rep_mean,
        z_stat,
        p_value,
        detected,
        alpha,
        n,
        n_boot: moments.replicates.len(),
        n_failed: moments.n_failed,
        degenerate_se: degenerate,
    })
}

/// Cross-group contrasts: each group's bias minus the size-weighted average of
/// the others', tested with replicate-paired bootstrap differences.
pub fn cross_group_bias(
    estimates: &[BiasEstimate],
    sizes: &[usize],
    moments: &[BiasMoments],
    alpha: f64,
) -> Result<Vec<CrossGroupBias>> {
    if estimates.len() < 2 {
        return Err(Error::SingleGroup);
    }
    if !(alpha.is_finite() && alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidAlpha { alpha });
    }
    if estimates.len() != sizes.len() || estimates.len() != moments.len() {
        return Err(Error::InvalidConfig {
            msg: "cross_group_bias inputs must be aligned per group".into(),
        });
    }
    let n_boot = moments[0].replicates.len();
    if moments.iter().any(|m| m.replicates.len() != n_boot) {
        return Err(Error::InvalidConfig {
            msg: "all groups must use the same number of bootstrap replicates".into(),
        });
    }
    let total: f64 = sizes.iter().map(|&s| s as f64).sum();
    let mut out = Vec::with_capacity(estimates.len());
    for (g, est) in estimates.iter().enumerate() {
        let rest = total - sizes[g] as f64;
        let complement_point: f64 = estimates
            .iter()
            .zip(sizes)
            .enumerate()
            .filter(|(k, _)| *k != g)
            .map(|(_, (e, &s))| e.b_hat * s as f64)
            .sum::<f64>()
            / rest;
        let value = est.b_hat - complement_point;
        // Paired replicate differences; a replicate counts only when every
        // group produced it.
        let mut diffs = Vec::with_capacity(n_boot);
        'rep: for r in 0..n_boot {
            let mut acc = 0.0;
            for (k, m) in moments.iter().enumerate() {
                match m.replicates[r] {
                    None => continue 'rep,
                    Some(b) => {
                        if k != g {
                            acc += b * sizes[k] as f64;
                        }
                    }
                }
            }
            let own = moments[g].replicates[r].expect("checked above");
            diffs.push(own - acc / rest);
        }
        let sigma_hat = stats::sample_sd(&diffs);
        let degenerate = sigma_hat == 0.0;
        let (z_stat, p_value, detected) = if degenerate {
            (0.0, 1.0, false)
        } else {
            let z = value / sigma_hat;
            (z, stats::two_sided_p(z), z.abs() >= stats::z_crit(alpha))
        };
        out.push(CrossGroupBias {
            group: est.group.clone(),
            value,
            sigma_hat,
            z_stat,
            p_value,
            detected,
            alpha,
            degenerate_se: degenerate,
        });
    }
    Ok(out)
}

/// Runs the full detection stage on one half: per-group bias estimates with
/// bootstrap Wald tests, cross-group contrasts, and Bonferroni adjustment.
pub fn detect_groups(
    views: &[GroupView<'_>],
    scale: EffectScale,
    estimator: &GateEstimator,
    split: &SplitAssignment,
    half: Half,
    cfg: &DetectionConfig,
) -> Result<DetectionOutcome> {
    if views.is_empty() {
        return Err(Error::InvalidConfig {
            msg: "detection needs at least one group".into(),
        });
    }
    let n_tests = cfg
        .n_tests
        .unwrap_or(if views.len() >= 2 { 2 * views.len() } else { 1 });
    let alpha_adjusted = bonferroni_adjust(cfg.alpha, n_tests)?;

    let stages: Vec<Result<(f64, BiasMoments, usize, bool)>> = views
        .par_iter()
        .map(|view| {
            let b_hat = estimate_group_bias(view, scale, estimator, split, half)?;
            let moments =
                bootstrap_moments(view, scale, estimator, split, half, cfg.n_boot, cfg.seed)?;
            let half_view = view.restrict_half(split, half);
            let predict = view.restrict(split, half.predict_tag());
            let weights = estimate_collapse_weights(&predict, scale)?;
            Ok((b_hat, moments, half_view.n(), weights.uniform_fallback))
        })
        .collect();

    let mut per_group = Vec::with_capacity(views.len());
    let mut all_moments = Vec::with_capacity(views.len());
    let mut warnings = Vec::new();
    for (view, stage) in views.iter().zip(stages) {
        let (b_hat, moments, n_half, fallback) = stage?;
        let est = wald_test(&view.group, b_hat, &moments, n_half, alpha_adjusted)?;
        if fallback {
            warnings.push(Warning::MissingBaselinePrediction {
                group: view.group.clone(),
            });
        }
        if est.degenerate_se {
            warnings.push(Warning::ZeroStandardError {
                group: view.group.clone(),
            });
        }
        per_group.push(est);
        all_moments.push(moments);
    }
    let cross_group = if views.len() >= 2 {
        let sizes: Vec<usize> = views
            .iter()
            .map(|v| v.restrict_half(split, half).n())
            .collect();
        cross_group_bias(&per_group, &sizes, &all_moments, alpha_adjusted)?
    } else {
        Vec::new()
    };
    Ok(DetectionOutcome {
        per_group,
        cross_group,
        alpha_adjusted,
        warnings,
        moments: all_moments,
    })
}
