//! Threshold targeting policies, decision disagreement between original and
//! debiased predictions, and IPW profit evaluation.

use std::collections::BTreeMap;

use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::data::GroupView;
use crate::error::{Error, Result};
use crate::mitigation::DebiasPlan;
use crate::stats;

/// Margin economics of a treat/hold decision: revenue R per retained positive
/// outcome and cost C per treated unit imply the break-even relative effect
/// M = R/(R − C) > 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyEconomics {
    pub revenue: f64,
    pub cost: f64,
    pub threshold: f64,
}

impl PolicyEconomics {
    pub fn new(revenue: f64, cost: f64) -> Result<PolicyEconomics> {
        if !(revenue.is_finite() && revenue > 0.0) {
            return Err(Error::InvalidEconomics {
                msg: format!("revenue must be positive, got {revenue}"),
            });
        }
        if !(cost.is_finite() && cost > 0.0 && cost < revenue) {
            return Err(Error::InvalidEconomics {
                msg: format!("cost must lie strictly inside (0, revenue), got {cost}"),
            });
        }
        Ok(PolicyEconomics {
            revenue,
            cost,
            threshold: revenue / (revenue - cost),
        })
    }
}

/// A targeting policy: treat when the (optionally corrected) prediction
/// clears the break-even threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySpec {
    pub economics: PolicyEconomics,
    /// Corrections to apply before thresholding; `None` is the base policy.
    pub plan: Option<DebiasPlan>,
}

impl PolicySpec {
    pub fn base(economics: PolicyEconomics) -> PolicySpec {
        PolicySpec {
            economics,
            plan: None,
        }
    }

    pub fn debiased(economics: PolicyEconomics, plan: DebiasPlan) -> PolicySpec {
        PolicySpec {
            economics,
            plan: Some(plan),
        }
    }

    /// Treat iff cate_pred − correction > M, evaluated as
    /// cate_pred > M + correction so the uncorrected prediction is compared
    /// once. Exact threshold equality is a hold.
    pub fn decide(&self, group: &str, cate_pred: f64) -> Result<bool> {
        let correction = match &self.plan {
            None => 0.0,
            Some(plan) => plan.correction_for(group)?,
        };
        Ok(cate_pred > self.economics.threshold + correction)
    }
}

/// Closed-form probability that a correction of magnitude `correction_abs`
/// flips the treat/hold decision, for predictions τ + b + ε with
/// ε ~ Normal(0, σ²): Φ((M + |c| − (τ+b))/σ) − Φ((M − |c| − (τ+b))/σ).
pub fn disagreement_probability(
    tau_plus_b: f64,
    sigma: f64,
    correction_abs: f64,
    threshold: f64,
) -> Result<f64> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::NonpositiveSigma { sigma });
    }
    let c = correction_abs.abs();
    let hi = stats::normal_cdf((threshold + c - tau_plus_b) / sigma);
    let lo = stats::normal_cdf((threshold - c - tau_plus_b) / sigma);
    Ok((hi - lo).max(0.0))
}

/// Share of units whose decisions differ between two policies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisagreementShares {
    pub overall: f64,
    pub per_group: BTreeMap<String, f64>,
    pub n: usize,
}

/// Empirical disagreement: the literal share of rows on which the two
/// policies decide differently.
pub fn empirical_disagreement_share(
    views: &[GroupView<'_>],
    policy_a: &PolicySpec,
    policy_b: &PolicySpec,
) -> Result<DisagreementShares> {
    let mut per_group = BTreeMap::new();
    let mut total = 0usize;
    let mut disagreements = 0usize;
    for view in views {
        let mut d = 0usize;
        for row in view.rows() {
            let a = policy_a.decide(&view.group, row.cate_pred)?;
            let b = policy_b.decide(&view.group, row.cate_pred)?;
            if a != b {
                d += 1;
            }
        }
        per_group.insert(view.group.clone(), d as f64 / view.n().max(1) as f64);
        total += view.n();
        disagreements += d;
    }
    if total == 0 {
        return Err(Error::InvalidConfig {
            msg: "disagreement share needs at least one row".into(),
        });
    }
    Ok(DisagreementShares {
        overall: disagreements as f64 / total as f64,
        per_group,
        n: total,
    })
}

/// Disagreement share within quantile bins of |prediction − threshold|.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceBin {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
    pub share: f64,
}

/// Stratifies disagreement by proximity to the decision boundary: rows are
/// binned into `n_bins` quantile bins of |cate_pred − M| and the disagreement
/// share is computed per bin.
pub fn disagreement_by_distance(
    views: &[GroupView<'_>],
    policy_a: &PolicySpec,
    policy_b: &PolicySpec,
    n_bins: usize,
) -> Result<Vec<DistanceBin>> {
    if n_bins == 0 {
        return Err(Error::InvalidConfig {
            msg: "need at least one distance bin".into(),
        });
    }
    let m = policy_a.economics.threshold;
    let mut entries: Vec<(f64, bool)> = Vec::new();
    for view in views {
        for row in view.rows() {
            let a = policy_a.decide(&view.group, row.cate_pred)?;
            let b = policy_b.decide(&view.group, row.cate_pred)?;
            entries.push(((row.cate_pred - m).abs(), a != b));
        }
    }
    if entries.is_empty() {
        return Err(Error::InvalidConfig {
            msg: "disagreement binning needs at least one row".into(),
        });
    }
    entries.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let n = entries.len();
    let mut bins = Vec::with_capacity(n_bins);
    for b in 0..n_bins {
        let start = n * b / n_bins;
        let end = n * (b + 1) / n_bins;
        if start == end {
            continue;
        }
        let slice = &entries[start..end];
        let d = slice.iter().filter(|e| e.1).count();
        bins.push(DistanceBin {
            lo: slice.first().unwrap().0,
            hi: slice.last().unwrap().0,
            n: slice.len(),
            share: d as f64 / slice.len() as f64,
        });
    }
    Ok(bins)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPoint {
    pub cost: f64,
    pub threshold: f64,
    pub share: f64,
}

/// Overall disagreement between the base and debiased policies as the
/// per-unit cost (hence the threshold M) sweeps a grid.
pub fn disagreement_threshold_grid(
    views: &[GroupView<'_>],
    revenue: f64,
    costs: &[f64],
    plan: &DebiasPlan,
) -> Result<Vec<ThresholdPoint>> {
    let mut out = Vec::with_capacity(costs.len());
    for &cost in costs {
        let economics = PolicyEconomics::new(revenue, cost)?;
        let base = PolicySpec::base(economics);
        let debiased = PolicySpec::debiased(economics, plan.clone());
        let share = empirical_disagreement_share(views, &base, &debiased)?;
        out.push(ThresholdPoint {
            cost,
            threshold: economics.threshold,
            share: share.overall,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisePoint {
    pub sigma: f64,
    pub share: f64,
}

/// Overall disagreement as synthetic prediction noise grows. One standard
/// normal draw per row is scaled by each σ and added to both policies'
/// inputs, isolating the noise effect from resampling error.
pub fn disagreement_noise_grid(
    views: &[GroupView<'_>],
    policy_a: &PolicySpec,
    policy_b: &PolicySpec,
    sigmas: &[f64],
    seed: u64,
) -> Result<Vec<NoisePoint>> {
    if sigmas.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
        return Err(Error::InvalidConfig {
            msg: "noise grid sigmas must be nonnegative".into(),
        });
    }
    let normal = rand_distr::StandardNormal;
    let mut draws: Vec<Vec<f64>> = Vec::with_capacity(views.len());
    for view in views {
        let mut rng = stats::seeded_rng(stats::mix(
            stats::mix(seed, stats::CTX_NOISE),
            stats::label_hash(&view.group),
        ));
        draws.push((0..view.n()).map(|_| normal.sample(&mut rng)).collect());
    }
    let mut out = Vec::with_capacity(sigmas.len());
    for &sigma in sigmas {
        let mut total = 0usize;
        let mut disagreements = 0usize;
        for (view, z) in views.iter().zip(&draws) {
            for (row, zi) in view.rows().zip(z) {
                let noisy = row.cate_pred + sigma * zi;
                let a = policy_a.decide(&view.group, noisy)?;
                let b = policy_b.decide(&view.group, noisy)?;
                total += 1;
                if a != b {
                    disagreements += 1;
                }
            }
        }
        if total == 0 {
            return Err(Error::InvalidConfig {
                msg: "noise grid needs at least one row".into(),
            });
        }
        out.push(NoisePoint {
            sigma,
            share: disagreements as f64 / total as f64,
        });
    }
    Ok(out)
}

/// Rows a rank policy treats: the view's top `k` rows by prediction, ties
/// broken by dataset order. Constant within-group shifts cannot change the
/// selected set.
pub fn topk_by_prediction(view: &GroupView<'_>, k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = view.indices.clone();
    let ds = view.dataset();
    order.sort_by(|&a, &b| {
        ds.rows[b]
            .cate_pred
            .partial_cmp(&ds.rows[a].cate_pred)
            .unwrap()
            .then(a.cmp(&b))
    });
    order.truncate(k.min(order.len()));
    order.sort_unstable();
    order
}

/// Which variance accompanies an IPW profit estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceKind {
    /// N⁻² Σ (u_j − ψ̂)².
    AsPrinted,
    /// Sample variance of u divided by N.
    SamplePlugIn,
}

/// IPW profit estimate for one group under one policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfitEstimate {
    pub group: String,
    /// Estimated per-unit profit ψ̂.
    pub value: f64,
    pub variance: f64,
    pub n: usize,
    /// Share of rows the policy would treat.
    pub treated_share: f64,
}

fn variance_of(units: &[f64], kind: VarianceKind) -> f64 {
    let n = units.len() as f64;
    let psi = stats::mean(units);
    let ss: f64 = units.iter().map(|u| (u - psi) * (u - psi)).sum();
    match kind {
        VarianceKind::AsPrinted => ss / (n * n),
        VarianceKind::SamplePlugIn => {
            if units.len() < 2 {
                0.0
            } else {
                ss / ((n - 1.0) * n)
            }
        }
    }
}

fn policy_units(
    view: &GroupView<'_>,
    policy: &PolicySpec,
    p: f64,
) -> Result<(Vec<f64>, f64)> {
    let economics = policy.economics;
    let mut units = Vec::with_capacity(view.n());
    let mut treated = 0usize;
    for row in view.rows() {
        let pi = if policy.decide(&view.group, row.cate_pred)? {
            treated += 1;
            1.0
        } else {
            0.0
        };
        let t = f64::from(row.treatment);
        let omega = t * pi / p + (1.0 - t) * (1.0 - pi) / (1.0 - p);
        units.push(omega * (row.outcome * economics.revenue - economics.cost * pi));
    }
    Ok((units, treated as f64 / view.n().max(1) as f64))
}

fn resolve_propensity(view: &GroupView<'_>, p: Option<f64>) -> Result<f64> {
    let p = match p {
        Some(p) => p,
        None => view.n_treated as f64 / view.n().max(1) as f64,
    };
    if !(p.is_finite() && p > 0.0 && p < 1.0) {
        return Err(Error::DegeneratePropensity { p });
    }
    Ok(p)
}

/// Inverse-propensity-weighted per-unit profit of a policy on one group:
/// ψ̂ = N⁻¹ Σ ω_j (Y_j R − C π_j) with
/// ω_j = T_j π_j / p + (1 − T_j)(1 − π_j)/(1 − p).
///
/// `p` defaults to the group's empirical treated fraction.
pub fn ipw_profit(
    view: &GroupView<'_>,
    policy: &PolicySpec,
    p: Option<f64>,
    kind: VarianceKind,
) -> Result<ProfitEstimate> {
    if view.n() == 0 {
        return Err(Error::EmptySplit {
            group: view.group.clone(),
        });
    }
    let p = resolve_propensity(view, p)?;
    let (units, treated_share) = policy_units(view, policy, p)?;
    Ok(ProfitEstimate {
        group: view.group.clone(),
        value: stats::mean(&units),
        variance: variance_of(&units, kind),
        n: view.n(),
        treated_share,
    })
}

/// One group's profit difference between a debiased and a base policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupProfitDelta {
    pub group: String,
    pub base_value: f64,
    pub debiased_value: f64,
    /// Mean of the per-unit paired differences.
    pub delta: f64,
    pub variance: f64,
    pub n: usize,
    pub disagreement_share: f64,
}

/// Profit comparison across groups with a normal-approximation CI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfitDeltaReport {
    pub per_group: Vec<GroupProfitDelta>,
    pub base_value: f64,
    pub debiased_value: f64,
    /// Size-weighted aggregate Σ (N_g/N) Δ_g.
    pub delta: f64,
    pub variance: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Δ as a percent of the base profit; absent when base is zero.
    pub relative_pct: Option<f64>,
}

const Z_95: f64 = 1.959963984540054;

/// Pairs the base and debiased policies unit by unit: the same rows, outcomes,
/// and IPW weights-after-decisions feed both, so identical policies give a
/// delta of exactly zero.
pub fn profit_delta(
    views: &[GroupView<'_>],
    base: &PolicySpec,
    debiased: &PolicySpec,
    p: Option<f64>,
    kind: VarianceKind,
) -> Result<ProfitDeltaReport> {
    if views.is_empty() {
        return Err(Error::InvalidConfig {
            msg: "profit delta needs at least one group".into(),
        });
    }
    let total: usize = views.iter().map(|v| v.n()).sum();
    let mut per_group = Vec::with_capacity(views.len());
    let mut agg_delta = 0.0;
    let mut agg_var = 0.0;
    let mut agg_base = 0.0;
    let mut agg_deb = 0.0;
    for view in views {
        if view.n() == 0 {
            return Err(Error::EmptySplit {
                group: view.group.clone(),
            });
        }
        let p_g = resolve_propensity(view, p)?;
        let (base_units, _) = policy_units(view, base, p_g)?;
        let (deb_units, _) = policy_units(view, debiased, p_g)?;
        let diffs: Vec<f64> = deb_units
            .iter()
            .zip(&base_units)
            .map(|(d, b)| d - b)
            .collect();
        let mut disagreements = 0usize;
        for row in view.rows() {
            if base.decide(&view.group, row.cate_pred)?
                != debiased.decide(&view.group, row.cate_pred)?
            {
                disagreements += 1;
            }
        }
        let delta = stats::mean(&diffs);
        let variance = variance_of(&diffs, kind);
        let share = view.n() as f64 / total as f64;
        let base_value = stats::mean(&base_units);
        let deb_value = stats::mean(&deb_units);
        agg_delta += share * delta;
        agg_var += share * share * variance;
        agg_base += share * base_value;
        agg_deb += share * deb_value;
        per_group.push(GroupProfitDelta {
            group: view.group.clone(),
            base_value,
            debiased_value: deb_value,
            delta,
            variance,
            n: view.n(),
            disagreement_share: disagreements as f64 / view.n() as f64,
        });
    }
    let half_width = Z_95 * agg_var.sqrt();
    Ok(ProfitDeltaReport {
        per_group,
        base_value: agg_base,
        debiased_value: agg_deb,
        delta: agg_delta,
        variance: agg_var,
        ci_low: agg_delta - half_width,
        ci_high: agg_delta + half_width,
        relative_pct: if agg_base == 0.0 {
            None
        } else {
            Some(100.0 * agg_delta / agg_base)
        },
    })
}
