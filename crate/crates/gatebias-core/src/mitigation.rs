//! Shrinkage strategies that turn detected biases into correction plans, and
//! the application of those plans to predictions.

use std::collections::BTreeMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Half};
use crate::detection::BiasEstimate;
use crate::error::{Error, Result};
use crate::stats;

/// Shrinkage factor choices for the correction γ̂·b̂.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "strategy")]
pub enum ShrinkageStrategy {
    /// γ = 0; keep predictions as they are.
    NoDebias,
    /// γ = 1; subtract the full estimated bias.
    Naive,
    /// γ = 1 when the Wald test rejects at `alpha`, else 0.
    MeanError { alpha: f64 },
    /// γ = b̂²/m2, clamped to [0, 1].
    MsePlus,
    /// γ = (m2 − σ̂²_pop)/m2 = rep_mean²/m2; lies in [0, 1] by construction.
    MseMinus,
    /// γ = b²/(σ² + b²) from known truth; the MSE-optimal factor.
    OracleMse { b: f64, sigma: f64 },
}

impl ShrinkageStrategy {
    /// Stable identifier used as a report key.
    pub fn key(self) -> &'static str {
        match self {
            ShrinkageStrategy::NoDebias => "no_debias",
            ShrinkageStrategy::Naive => "naive",
            ShrinkageStrategy::MeanError { .. } => "mean_error",
            ShrinkageStrategy::MsePlus => "mse_plus",
            ShrinkageStrategy::MseMinus => "mse_minus",
            ShrinkageStrategy::OracleMse { .. } => "oracle_mse",
        }
    }

    pub fn validate(self) -> Result<()> {
        match self {
            ShrinkageStrategy::MeanError { alpha } => {
                if alpha.is_finite() && alpha > 0.0 && alpha < 1.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidAlpha { alpha })
                }
            }
            ShrinkageStrategy::OracleMse { b, sigma } => {
                if b.is_finite() && sigma.is_finite() && sigma >= 0.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidConfig {
                        msg: format!("oracle parameters b={b}, sigma={sigma} are invalid"),
                    })
                }
            }
            _ => Ok(()),
        }
    }
}

impl FromStr for ShrinkageStrategy {
    type Err = Error;

    /// Accepted names: none, naive, me, mse-, mse+ (plus snake_case aliases).
    /// The oracle strategy needs true parameters and has no name form.
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" | "no_debias" | "nodebias" => Ok(ShrinkageStrategy::NoDebias),
            "naive" => Ok(ShrinkageStrategy::Naive),
            "me" | "mean_error" | "mean-error" => Ok(ShrinkageStrategy::MeanError { alpha: 0.05 }),
            "mse-" | "mse_minus" | "mse-minus" => Ok(ShrinkageStrategy::MseMinus),
            "mse+" | "mse_plus" | "mse-plus" => Ok(ShrinkageStrategy::MsePlus),
            other => Err(Error::InvalidStrategy {
                name: other.to_string(),
            }),
        }
    }
}

impl std::fmt::Display for ShrinkageStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ShrinkageStrategy::MeanError { alpha } => write!(f, "mean_error(alpha={alpha})"),
            ShrinkageStrategy::OracleMse { b, sigma } => {
                write!(f, "oracle_mse(b={b}, sigma={sigma})")
            }
            other => f.write_str(other.key()),
        }
    }
}

/// Slack under which a γ that drifted past [0, 1] by floating-point error is
/// snapped back without being reported as clamped.
const GAMMA_SNAP: f64 = 1e-9;

/// Computes the shrinkage factor for one group.
///
/// Returns `(gamma, clamped)` where `clamped` marks a substantive clamp, not a
/// floating-point snap within [`GAMMA_SNAP`].
pub fn compute_gamma(strategy: ShrinkageStrategy, stats_in: &BiasEstimate) -> Result<(f64, bool)> {
    strategy.validate()?;
    let (raw, provably_inside) = match strategy {
        ShrinkageStrategy::NoDebias => (0.0, true),
        ShrinkageStrategy::Naive => (1.0, true),
        ShrinkageStrategy::MeanError { alpha } => {
            if stats_in.sigma_hat == 0.0 {
                (0.0, true)
            } else {
                let z = (stats_in.b_hat / stats_in.sigma_hat).abs();
                (
                    if z >= stats::z_crit(alpha) { 1.0 } else { 0.0 },
                    true,
                )
            }
        }
        ShrinkageStrategy::MsePlus => {
            if stats_in.m2_hat == 0.0 {
                (0.0, true)
            } else {
                (stats_in.b_hat * stats_in.b_hat / stats_in.m2_hat, false)
            }
        }
        ShrinkageStrategy::MseMinus => {
            if stats_in.m2_hat == 0.0 {
                (0.0, true)
            } else {
                // rep_mean²/m2 = (m2 − population variance)/m2 ≤ 1 always.
                let g = stats_in.rep_mean * stats_in.rep_mean / stats_in.m2_hat;
                debug_assert!((-GAMMA_SNAP..=1.0 + GAMMA_SNAP).contains(&g));
                (g, true)
            }
        }
        ShrinkageStrategy::OracleMse { b, sigma } => {
            if b == 0.0 && sigma == 0.0 {
                (0.0, true)
            } else {
                (b * b / (sigma * sigma + b * b), true)
            }
        }
    };
    if raw < 0.0 {
        let snap = raw >= -GAMMA_SNAP;
        Ok((0.0, !(snap || provably_inside)))
    } else if raw > 1.0 {
        let snap = raw <= 1.0 + GAMMA_SNAP;
        Ok((1.0, !(snap || provably_inside)))
    } else {
        Ok((raw, false))
    }
}

/// Per-group correction: `correction = gamma * b_hat` is subtracted from every
/// prediction in the group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupCorrection {
    pub gamma: f64,
    pub b_hat: f64,
    pub correction: f64,
    pub clamped: bool,
}

/// A complete correction plan: one shrinkage strategy applied to every group's
/// bias estimate, tagged with the half it was fitted on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DebiasPlan {
    pub strategy: ShrinkageStrategy,
    pub source_half: Half,
    pub groups: BTreeMap<String, GroupCorrection>,
}

impl DebiasPlan {
    pub fn correction_for(&self, group: &str) -> Result<f64> {
        self.groups
            .get(group)
            .map(|c| c.correction)
            .ok_or_else(|| Error::UnknownGroupInPlan {
                group: group.to_string(),
            })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(json: &str) -> Result<DebiasPlan> {
        Ok(serde_json::from_str(json)?)
    }
}

/// Builds a correction plan from per-group bias estimates.
pub fn build_plan(
    strategy: ShrinkageStrategy,
    estimates: &[BiasEstimate],
    source_half: Half,
) -> Result<DebiasPlan> {
    strategy.validate()?;
    let mut groups = BTreeMap::new();
    for est in estimates {
        let (gamma, clamped) = compute_gamma(strategy, est)?;
        groups.insert(
            est.group.clone(),
            GroupCorrection {
                gamma,
                b_hat: est.b_hat,
                correction: gamma * est.b_hat,
                clamped,
            },
        );
    }
    Ok(DebiasPlan {
        strategy,
        source_half,
        groups,
    })
}

/// Applies a plan to a dataset: every row's prediction becomes
/// `cate_pred − correction` for its group. Within-group prediction ranks are
/// preserved. Every group present must be covered by the plan.
pub fn apply_debias(ds: &Dataset, plan: &DebiasPlan) -> Result<Dataset> {
    for g in &ds.groups {
        if !plan.groups.contains_key(g) {
            return Err(Error::UnknownGroupInPlan { group: g.clone() });
        }
    }
    let mut rows = ds.rows.clone();
    for row in &mut rows {
        row.cate_pred -= plan.groups[&row.group].correction;
    }
    let mut out = Dataset::new(rows, ds.aux.clone(), ds.scale)?;
    out.aux_names = ds.aux_names.clone();
    Ok(out)
}
