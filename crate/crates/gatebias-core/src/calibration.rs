//! Regression-style calibration of predicted group effects onto experimental
//! estimates, as an alternative to per-group shrinkage.

use std::collections::BTreeMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{EffectScale, GroupView, Half, SplitAssignment};
use crate::error::{Error, Result};
use crate::gate::{estimate_collapse_weights, model_implied_gate, GateEstimator};

/// Calibration family mapping predicted group effects to experimental ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationFamily {
    /// y ≈ a + s·x by weighted least squares.
    Affine,
    /// y ≈ exp(a)·x^s, fitted as WLS on logs with untransformed weights.
    LogAffine,
    /// Weighted isotonic (nondecreasing) fit.
    Isotonic,
    /// Isotonic fit on log-log scale.
    LogIsotonic,
}

impl CalibrationFamily {
    pub fn as_str(self) -> &'static str {
        match self {
            CalibrationFamily::Affine => "affine",
            CalibrationFamily::LogAffine => "log_affine",
            CalibrationFamily::Isotonic => "isotonic",
            CalibrationFamily::LogIsotonic => "log_isotonic",
        }
    }

    pub const ALL: [CalibrationFamily; 4] = [
        CalibrationFamily::Affine,
        CalibrationFamily::LogAffine,
        CalibrationFamily::Isotonic,
        CalibrationFamily::LogIsotonic,
    ];

    fn log_domain(self) -> bool {
        matches!(
            self,
            CalibrationFamily::LogAffine | CalibrationFamily::LogIsotonic
        )
    }
}

impl FromStr for CalibrationFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "affine" => Ok(CalibrationFamily::Affine),
            "log_affine" | "log-affine" | "logaffine" => Ok(CalibrationFamily::LogAffine),
            "isotonic" => Ok(CalibrationFamily::Isotonic),
            "log_isotonic" | "log-isotonic" | "logisotonic" => Ok(CalibrationFamily::LogIsotonic),
            other => Err(Error::InvalidConfig {
                msg: format!("unknown calibration family `{other}`"),
            }),
        }
    }
}

/// One group's calibration inputs: its model-implied GATE, its experimental
/// GATE, and a precision weight (typically 1/σ̂²).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupPoint {
    pub group: String,
    pub predicted: f64,
    pub experimental: f64,
    pub weight: f64,
}

/// Builds one calibration point per group from one half of a split: the
/// collapse-weighted model-implied GATE on the half's prediction subset
/// against the experimental GATE on its estimation subset, weighted by the
/// estimation subset's size. Callers wanting precision weights overwrite
/// `weight` afterwards.
pub fn calibration_points(
    views: &[GroupView<'_>],
    scale: EffectScale,
    estimator: &GateEstimator,
    split: &SplitAssignment,
    half: Half,
) -> Result<Vec<GroupPoint>> {
    let mut points = Vec::with_capacity(views.len());
    for view in views {
        let predict = view.restrict(split, half.predict_tag());
        let estimate = view.restrict(split, half.estimate_tag());
        if predict.n() == 0 || estimate.n() == 0 {
            return Err(Error::EmptySplit {
                group: view.group.clone(),
            });
        }
        let weights = estimate_collapse_weights(&predict, scale)?;
        let predicted = model_implied_gate(&predict, &weights, scale)?.value;
        let experimental = estimator.estimate(&estimate, scale)?.value;
        points.push(GroupPoint {
            group: view.group.clone(),
            predicted,
            experimental,
            weight: estimate.n() as f64,
        });
    }
    Ok(points)
}

/// A fitted calibration map. Parametric families fill `intercept`/`slope`
/// (log-scale parameters for [`CalibrationFamily::LogAffine`]); isotonic
/// families fill `levels`, the fitted block values in increasing-x order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationFit {
    pub family: CalibrationFamily,
    pub intercept: Option<f64>,
    pub slope: Option<f64>,
    pub levels: Option<Vec<f64>>,
    /// Calibrated effect per group.
    pub fitted: BTreeMap<String, f64>,
}

/// Weighted isotonic regression by pool-adjacent-violators.
///
/// Inputs are ordered by the predictor; the result is the nondecreasing
/// sequence minimizing Σ wᵢ(fᵢ − yᵢ)². Panics if lengths differ or weights are
/// not positive.
pub fn weighted_pava(y: &[f64], w: &[f64]) -> Vec<f64> {
    assert_eq!(y.len(), w.len(), "weighted_pava length mismatch");
    assert!(w.iter().all(|&wi| wi > 0.0), "weights must be positive");
    // Blocks of (weight sum, weighted mean, member count).
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(y.len());
    for (&yi, &wi) in y.iter().zip(w) {
        let mut cur = (wi, yi, 1usize);
        while let Some(&(pw, pm, pc)) = blocks.last() {
            if pm > cur.1 {
                blocks.pop();
                let wsum = pw + cur.0;
                cur = (wsum, (pw * pm + cur.0 * cur.1) / wsum, pc + cur.2);
            } else {
                break;
            }
        }
        blocks.push(cur);
    }
    let mut out = Vec::with_capacity(y.len());
    for (_, m, c) in blocks {
        out.extend(std::iter::repeat(m).take(c));
    }
    out
}

fn validate_points(family: CalibrationFamily, points: &[GroupPoint]) -> Result<()> {
    if points.len() < 2 {
        return Err(Error::TooFewGroups {
            needed: 2,
            got: points.len(),
        });
    }
    for p in points {
        if !(p.weight.is_finite() && p.weight > 0.0) {
            return Err(Error::ZeroWeight {
                group: p.group.clone(),
            });
        }
        if !(p.predicted.is_finite() && p.experimental.is_finite()) {
            return Err(Error::InvalidConfig {
                msg: format!("group `{}` has non-finite calibration inputs", p.group),
            });
        }
        if family.log_domain() && (p.predicted <= 0.0 || p.experimental <= 0.0) {
            return Err(Error::NonpositiveGateForLogFamily {
                group: p.group.clone(),
            });
        }
    }
    Ok(())
}

fn wls(x: &[f64], y: &[f64], w: &[f64]) -> (f64, f64) {
    let wsum: f64 = w.iter().sum();
    let mx = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / wsum;
    let my = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / wsum;
    let sxx: f64 = x.iter().zip(w).map(|(a, b)| b * (a - mx) * (a - mx)).sum();
    let sxy: f64 = x
        .iter()
        .zip(y)
        .zip(w)
        .map(|((a, c), b)| b * (a - mx) * (c - my))
        .sum();
    // All predictors equal: the weighted mean is the least-squares fit.
    if sxx == 0.0 {
        (my, 0.0)
    } else {
        let slope = sxy / sxx;
        (my - slope * mx, slope)
    }
}

/// Fits a calibration map from predicted to experimental group effects.
///
/// Isotonic families pre-pool groups with exactly equal predicted effects
/// before running PAVA, so tied groups share one fitted level.
pub fn fit_calibration(
    family: CalibrationFamily,
    points: &[GroupPoint],
) -> Result<CalibrationFit> {
    validate_points(family, points)?;
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        points[a]
            .predicted
            .partial_cmp(&points[b].predicted)
            .unwrap()
            .then_with(|| points[a].group.cmp(&points[b].group))
    });
    let transform = |v: f64| if family.log_domain() { v.ln() } else { v };
    let back = |v: f64| if family.log_domain() { v.exp() } else { v };

    match family {
        CalibrationFamily::Affine | CalibrationFamily::LogAffine => {
            let x: Vec<f64> = order.iter().map(|&i| transform(points[i].predicted)).collect();
            let y: Vec<f64> = order
                .iter()
                .map(|&i| transform(points[i].experimental))
                .collect();
            let w: Vec<f64> = order.iter().map(|&i| points[i].weight).collect();
            let (intercept, slope) = wls(&x, &y, &w);
            let fitted = order
                .iter()
                .map(|&i| {
                    let fx = intercept + slope * transform(points[i].predicted);
                    (points[i].group.clone(), back(fx))
                })
                .collect();
            Ok(CalibrationFit {
                family,
                intercept: Some(intercept),
                slope: Some(slope),
                levels: None,
                fitted,
            })
        }
        CalibrationFamily::Isotonic | CalibrationFamily::LogIsotonic => {
            // Pool exact ties in the predictor first.
            let mut tie_blocks: Vec<(f64, f64, f64, Vec<usize>)> = Vec::new();
            for &i in &order {
                let x = points[i].predicted;
                let y = transform(points[i].experimental);
                let w = points[i].weight;
                match tie_blocks.last_mut() {
                    Some((bx, by, bw, members)) if *bx == x => {
                        *by = (*by * *bw + y * w) / (*bw + w);
                        *bw += w;
                        members.push(i);
                    }
                    _ => tie_blocks.push((x, y, w, vec![i])),
                }
            }
            let ys: Vec<f64> = tie_blocks.iter().map(|b| b.1).collect();
            let ws: Vec<f64> = tie_blocks.iter().map(|b| b.2).collect();
            let fit = weighted_pava(&ys, &ws);
            let mut fitted = BTreeMap::new();
            for (block, &level) in tie_blocks.iter().zip(&fit) {
                for &i in &block.3 {
                    fitted.insert(points[i].group.clone(), back(level));
                }
            }
            Ok(CalibrationFit {
                family,
                intercept: None,
                slope: None,
                levels: Some(fit.iter().map(|&l| back(l)).collect()),
                fitted,
            })
        }
    }
}

/// Shrinkage factor implied by a calibration map for one group:
/// γ = 1 + (τ̂_exp − τ̂_cal)/b̂. Outside [0, 1] is reported, not clamped; a zero
/// bias estimate leaves γ undefined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpliedGamma {
    pub group: String,
    pub gamma: Option<f64>,
    pub outside_unit_interval: bool,
}

/// Computes per-group implied shrinkage factors from a fitted calibration.
///
/// `points` must be the same inputs the fit was built from; b̂_g is recovered
/// as predicted − experimental.
pub fn implied_gamma(fit: &CalibrationFit, points: &[GroupPoint]) -> Result<Vec<ImpliedGamma>> {
    let mut out = Vec::with_capacity(points.len());
    for p in points {
        let calibrated = fit
            .fitted
            .get(&p.group)
            .copied()
            .ok_or_else(|| Error::UnknownGroupInPlan {
                group: p.group.clone(),
            })?;
        let b_hat = p.predicted - p.experimental;
        if b_hat == 0.0 {
            out.push(ImpliedGamma {
                group: p.group.clone(),
                gamma: None,
                outside_unit_interval: false,
            });
        } else {
            let gamma = 1.0 + (p.experimental - calibrated) / b_hat;
            out.push(ImpliedGamma {
                group: p.group.clone(),
                gamma: Some(gamma),
                outside_unit_interval: !(0.0..=1.0).contains(&gamma),
            });
        }
    }
    Ok(out)
}
