//! Detect, test, and mitigate group-level bias in CATE predictions using
//! randomized-experiment data, and quantify the targeting consequences.
//!
//! The pipeline: split each group's rows four ways ([`data::four_way_split`]),
//! compare the model-implied group effect against an experimental estimate on
//! the detection half ([`detection`]), shrink the estimated bias into a
//! correction plan ([`mitigation`]), score the residual bias out of sample on
//! the mitigation half ([`evaluation`]), and translate corrections into
//! targeting decisions and profit deltas ([`targeting`]). [`calibration`]
//! offers regression-style alternatives to per-group shrinkage, and
//! [`simulation`] generates synthetic experiments with known ground truth.

pub mod calibration;
pub mod data;
pub mod detection;
pub mod error;
pub mod evaluation;
pub mod gate;
pub mod mitigation;
pub mod simulation;
pub mod stats;
pub mod targeting;

pub use data::{
    four_way_split, load_dataset, load_dataset_path, quantile_grouping, write_dataset, ColumnMap,
    Dataset, EffectScale, ExperimentRow, FractionSpec, GroupView, Half, SplitAssignment, SplitTag,
};
pub use error::{Error, Result, Warning};
pub use gate::{
    converted_only_gate, estimate_collapse_weights, estimate_gate_cuped, estimate_gate_lin,
    estimate_gate_means, model_implied_gate, ratio_se_delta, CollapseWeights, GateEstimate,
    GateEstimator, GateMethod,
};

pub use calibration::{
    calibration_points, fit_calibration, implied_gamma, weighted_pava, CalibrationFamily,
    CalibrationFit, GroupPoint, ImpliedGamma,
};
pub use detection::{
    bonferroni_adjust, bootstrap_moments, cross_group_bias, detect_groups, estimate_group_bias,
    moments_from_replicates, wald_test, BiasEstimate, BiasMoments, CrossGroupBias,
    DetectionConfig, DetectionOutcome,
};
pub use evaluation::{
    distribution_metrics, evaluate_end_to_end, residual_bias, residual_bias_many, EvalConfig,
    EvalOutcome, MetricsReport, PctChange, ResidualBias, ResidualConfig, StrategyMetrics,
};
pub use mitigation::{
    apply_debias, build_plan, compute_gamma, DebiasPlan, GroupCorrection, ShrinkageStrategy,
};
pub use simulation::{draw_sample, generate_population, GroupTruth, SimConfig, SimPopulation};
pub use targeting::{
    disagreement_by_distance, disagreement_noise_grid, disagreement_probability,
    disagreement_threshold_grid, empirical_disagreement_share, ipw_profit, profit_delta,
    topk_by_prediction, DisagreementShares, DistanceBin, GroupProfitDelta, NoisePoint,
    PolicyEconomics, PolicySpec, ProfitDeltaReport, ProfitEstimate, ThresholdPoint, VarianceKind,
};
