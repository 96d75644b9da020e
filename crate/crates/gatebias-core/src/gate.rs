//! Group average treatment effect (GATE) estimators: experimental contrasts,
//! covariate-adjusted variants, and the model-implied collapse of CATE
//! predictions.

use serde::{Deserialize, Serialize};

use crate::data::{EffectScale, GroupView};
use crate::error::{Error, Result};
use crate::stats;

/// Which estimator produced a [`GateEstimate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateMethod {
    DiffMeans,
    RatioMeans,
    Lin,
    Cuped,
    ModelCollapse,
    ConvertedOnly,
}

/// Experimental GATE estimator selection, with column configuration where the
/// estimator needs one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum GateEstimator {
    /// Difference of arm means (additive) or ratio of arm means (relative).
    Means,
    /// OLS with treatment interacted with centered covariates; additive only.
    Lin { covariates: Vec<String> },
    /// Variance-reduced difference in means using a pre-experiment control
    /// column; additive only.
    Cuped { control: String },
    /// Ratio estimator using converted units only; relative only.
    ConvertedOnly,
}

impl GateEstimator {
    pub fn estimate(&self, view: &GroupView<'_>, scale: EffectScale) -> Result<GateEstimate> {
        match self {
            GateEstimator::Means => estimate_gate_means(view, scale),
            GateEstimator::Lin { covariates } => {
                if scale != EffectScale::Additive {
                    return Err(Error::ScaleMismatch {
                        method: "Lin regression adjustment",
                        required: "additive",
                        got: scale.as_str(),
                    });
                }
                estimate_gate_lin(view, covariates)
            }
            GateEstimator::Cuped { control } => {
                if scale != EffectScale::Additive {
                    return Err(Error::ScaleMismatch {
                        method: "CUPED adjustment",
                        required: "additive",
                        got: scale.as_str(),
                    });
                }
                estimate_gate_cuped(view, control)
            }
            GateEstimator::ConvertedOnly => {
                if scale != EffectScale::Relative {
                    return Err(Error::ScaleMismatch {
                        method: "converted-only estimator",
                        required: "relative",
                        got: scale.as_str(),
                    });
                }
                converted_only_gate(view)
            }
        }
    }
}

/// A group-level effect estimate on a declared scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateEstimate {
    pub group: String,
    pub value: f64,
    pub scale: EffectScale,
    pub method: GateMethod,
    pub n_treated: usize,
    pub n_control: usize,
    /// Closed-form standard error where one exists; bootstrap estimates cover
    /// the rest.
    pub analytic_se: Option<f64>,
}

/// Collapse weights aligned with one view's rows; mean is exactly 1.
#[derive(Debug, Clone, PartialEq)]
pub struct CollapseWeights {
    pub group: String,
    pub weights: Vec<f64>,
    /// Set when relative-scale weights fell back to uniform for lack of
    /// baseline predictions.
    pub uniform_fallback: bool,
}

fn arm_means(view: &GroupView<'_>) -> Result<(f64, f64, Vec<f64>, Vec<f64>)> {
    let (control, treated) = view.outcomes_by_arm();
    if treated.is_empty() {
        return Err(Error::EmptyArm {
            group: view.group.clone(),
            arm: "treated",
        });
    }
    if control.is_empty() {
        return Err(Error::EmptyArm {
            group: view.group.clone(),
            arm: "control",
        });
    }
    Ok((stats::mean(&control), stats::mean(&treated), control, treated))
}

/// Difference (additive) or ratio (relative) of arm mean outcomes.
pub fn estimate_gate_means(view: &GroupView<'_>, scale: EffectScale) -> Result<GateEstimate> {
    let (m0, m1, control, treated) = arm_means(view)?;
    let v0 = stats::population_variance(&control) / control.len() as f64;
    let v1 = stats::population_variance(&treated) / treated.len() as f64;
    let (value, method, se) = match scale {
        EffectScale::Additive => (m1 - m0, GateMethod::DiffMeans, (v0 + v1).sqrt()),
        EffectScale::Relative => {
            if m0 <= 0.0 {
                return Err(Error::ZeroControlMean {
                    group: view.group.clone(),
                });
            }
            let se = ratio_se(m0, m1, v0, v1);
            (m1 / m0, GateMethod::RatioMeans, se)
        }
    };
    Ok(GateEstimate {
        group: view.group.clone(),
        value,
        scale,
        method,
        n_treated: view.n_treated,
        n_control: view.n_control,
        analytic_se: Some(se),
    })
}

fn ratio_se(m0: f64, m1: f64, v0: f64, v1: f64) -> f64 {
    // Delta method for m1/m0 with gradient (1/m0, −m1/m0²).
    (v1 / (m0 * m0) + v0 * m1 * m1 / (m0 * m0 * m0 * m0)).sqrt()
}

/// Delta-method standard error of the ratio-of-means GATE, using per-arm
/// population variances of the outcome divided by arm sizes.
pub fn ratio_se_delta(view: &GroupView<'_>) -> Result<f64> {
    let (m0, m1, control, treated) = arm_means(view)?;
    if m0 <= 0.0 {
        return Err(Error::ZeroControlMean {
            group: view.group.clone(),
        });
    }
    let v0 = stats::population_variance(&control) / control.len() as f64;
    let v1 = stats::population_variance(&treated) / treated.len() as f64;
    Ok(ratio_se(m0, m1, v0, v1))
}

/// OLS of the outcome on treatment, per-group mean-centered covariates, and
/// their interactions. The treatment coefficient is the GATE. With no
/// covariates this reduces exactly to the difference in means.
pub fn estimate_gate_lin(view: &GroupView<'_>, covariates: &[String]) -> Result<GateEstimate> {
    if covariates.is_empty() {
        let mut est = estimate_gate_means(view, EffectScale::Additive)?;
        est.method = GateMethod::Lin;
        est.analytic_se = None;
        return Ok(est);
    }
    arm_means(view)?; // both arms must be populated
    let n = view.n();
    let k = covariates.len();
    let p = 2 + 2 * k;
    if n < p {
        return Err(Error::RankDeficientDesign {
            group: view.group.clone(),
        });
    }
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(k);
    for c in covariates {
        let mut x = view.aux(c)?;
        let m = stats::mean(&x);
        for v in &mut x {
            *v -= m;
        }
        cols.push(x);
    }
    let mut design = nalgebra::DMatrix::<f64>::zeros(n, p);
    let mut y = nalgebra::DVector::<f64>::zeros(n);
    for (r, row) in view.rows().enumerate() {
        let t = f64::from(row.treatment);
        design[(r, 0)] = 1.0;
        design[(r, 1)] = t;
        y[r] = row.outcome;
        for (j, col) in cols.iter().enumerate() {
            design[(r, 2 + j)] = col[r];
            design[(r, 2 + k + j)] = t * col[r];
        }
    }
    let svd = design.svd(true, true);
    let smax = svd.singular_values.max();
    let eps = smax * 1e-10;
    if smax == 0.0 || svd.rank(eps) < p {
        return Err(Error::RankDeficientDesign {
            group: view.group.clone(),
        });
    }
    let beta = svd.solve(&y_matrix(&y), eps).map_err(|_| Error::RankDeficientDesign {
        group: view.group.clone(),
    })?;
    Ok(GateEstimate {
        group: view.group.clone(),
        value: beta[(1, 0)],
        scale: EffectScale::Additive,
        method: GateMethod::Lin,
        n_treated: view.n_treated,
        n_control: view.n_control,
        analytic_se: None,
    })
}

fn y_matrix(y: &nalgebra::DVector<f64>) -> nalgebra::DMatrix<f64> {
    nalgebra::DMatrix::from_column_slice(y.len(), 1, y.as_slice())
}

/// CUPED: subtracts θ̂·Z from the outcome before the difference in means, with
/// θ̂ = Cov(Y, Z)/Var(Z) estimated on the pooled group. θ̂ = 0 reduces exactly
/// to the difference in means.
pub fn estimate_gate_cuped(view: &GroupView<'_>, control: &str) -> Result<GateEstimate> {
    let z = view.aux(control)?;
    let y: Vec<f64> = view.rows().map(|r| r.outcome).collect();
    arm_means(view)?;
    let var_z = stats::population_variance(&z);
    if var_z == 0.0 {
        return Err(Error::ZeroVarianceControl {
            group: view.group.clone(),
            column: control.to_string(),
        });
    }
    let my = stats::mean(&y);
    let mz = stats::mean(&z);
    let cov: f64 = y
        .iter()
        .zip(&z)
        .map(|(yi, zi)| (yi - my) * (zi - mz))
        .sum::<f64>()
        / y.len() as f64;
    let theta = cov / var_z;
    let mut adj_control = Vec::with_capacity(view.n_control);
    let mut adj_treated = Vec::with_capacity(view.n_treated);
    for (row, zi) in view.rows().zip(&z) {
        let adj = row.outcome - theta * zi;
        if row.treatment == 1 {
            adj_treated.push(adj);
        } else {
            adj_control.push(adj);
        }
    }
    let m0 = stats::mean(&adj_control);
    let m1 = stats::mean(&adj_treated);
    let v0 = stats::population_variance(&adj_control) / adj_control.len() as f64;
    let v1 = stats::population_variance(&adj_treated) / adj_treated.len() as f64;
    Ok(GateEstimate {
        group: view.group.clone(),
        value: m1 - m0,
        scale: EffectScale::Additive,
        method: GateMethod::Cuped,
        n_treated: view.n_treated,
        n_control: view.n_control,
        analytic_se: Some((v0 + v1).sqrt()),
    })
}

/// Estimates collapsibility weights for averaging CATE predictions into a
/// group effect.
///
/// Additive effects collapse with uniform weights. Relative effects weight
/// each unit by its predicted untreated mean relative to the group average, so
/// the weights have mean exactly 1. When baseline predictions are missing the
/// weights fall back to uniform and `uniform_fallback` is set; callers should
/// surface [`crate::error::Warning::MissingBaselinePrediction`].
pub fn estimate_collapse_weights(
    view: &GroupView<'_>,
    scale: EffectScale,
) -> Result<CollapseWeights> {
    if view.n() == 0 {
        return Err(Error::EmptySplit {
            group: view.group.clone(),
        });
    }
    if scale == EffectScale::Additive {
        return Ok(CollapseWeights {
            group: view.group.clone(),
            weights: vec![1.0; view.n()],
            uniform_fallback: false,
        });
    }
    let mu0: Option<Vec<f64>> = view.rows().map(|r| r.mu0_pred).collect();
    let Some(mu0) = mu0 else {
        return Ok(CollapseWeights {
            group: view.group.clone(),
            weights: vec![1.0; view.n()],
            uniform_fallback: true,
        });
    };
    let m = stats::mean(&mu0);
    if m <= 0.0 {
        return Err(Error::NonpositiveBaseline {
            detail: format!(
                "group `{}`: mean baseline prediction {m} is not strictly positive",
                view.group
            ),
        });
    }
    let mut weights: Vec<f64> = mu0.iter().map(|v| v / m).collect();
    // One renormalization pass pins the mean to 1 up to strict tolerance.
    let wm = stats::mean(&weights);
    for w in &mut weights {
        *w /= wm;
    }
    debug_assert!((stats::mean(&weights) - 1.0).abs() <= 1e-12);
    Ok(CollapseWeights {
        group: view.group.clone(),
        weights,
        uniform_fallback: false,
    })
}

/// Model-implied GATE: the weighted average of CATE predictions over the
/// view's rows, n⁻¹ Σ Ŵᵢ τ̂ᵢ. Weights must be aligned with the view.
pub fn model_implied_gate(
    view: &GroupView<'_>,
    weights: &CollapseWeights,
    scale: EffectScale,
) -> Result<GateEstimate> {
    if view.n() == 0 {
        return Err(Error::EmptySplit {
            group: view.group.clone(),
        });
    }
    if weights.weights.len() != view.n() {
        return Err(Error::InvalidConfig {
            msg: format!(
                "collapse weights for group `{}` cover {} rows, view has {}",
                view.group,
                weights.weights.len(),
                view.n()
            ),
        });
    }
    let value = view
        .rows()
        .zip(&weights.weights)
        .map(|(r, w)| w * r.cate_pred)
        .sum::<f64>()
        / view.n() as f64;
    Ok(GateEstimate {
        group: view.group.clone(),
        value,
        scale,
        method: GateMethod::ModelCollapse,
        n_treated: view.n_treated,
        n_control: view.n_control,
        analytic_se: None,
    })
}

/// Ratio GATE estimated from converted units only, reweighted by the CATE
/// model's predictions among converters:
/// (s₀λ̂₀² + s₁λ̂₁) / (s₀λ̂₀ + s₁), where sₐ counts arm-a converters and λ̂ₐ is
/// their mean predicted effect. Recovers a constant true ratio exactly.
pub fn converted_only_gate(view: &GroupView<'_>) -> Result<GateEstimate> {
    let mut s0 = 0usize;
    let mut s1 = 0usize;
    let mut sum0 = 0.0;
    let mut sum1 = 0.0;
    for row in view.rows() {
        if row.outcome == 1.0 {
            if row.treatment == 1 {
                s1 += 1;
                sum1 += row.cate_pred;
            } else {
                s0 += 1;
                sum0 += row.cate_pred;
            }
        }
    }
    if s1 == 0 {
        return Err(Error::NoPositiveOutcomes {
            group: view.group.clone(),
            arm: "treated",
        });
    }
    if s0 == 0 {
        return Err(Error::NoPositiveOutcomes {
            group: view.group.clone(),
            arm: "control",
        });
    }
    let l0 = sum0 / s0 as f64;
    let l1 = sum1 / s1 as f64;
    let s0f = s0 as f64;
    let s1f = s1 as f64;
    let value = (s0f * l0 * l0 + s1f * l1) / (s0f * l0 + s1f);
    Ok(GateEstimate {
        group: view.group.clone(),
        value,
        scale: EffectScale::Relative,
        method: GateMethod::ConvertedOnly,
        n_treated: view.n_treated,
        n_control: view.n_control,
        analytic_se: None,
    })
}
