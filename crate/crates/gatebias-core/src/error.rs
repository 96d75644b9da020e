use thiserror::Error;

/// Failure modes across loading, estimation, detection, mitigation, and targeting.
#[derive(Debug, Error)]
pub enum Error {
    #[error("missing required column `{name}`")]
    MissingColumn { name: String },

    /// Treatment cells must be exactly 0 or 1 after parsing.
    #[error("row {row}: treatment `{value}` is not 0 or 1")]
    NonBinaryTreatment { row: usize, value: String },

    /// Relative-scale outcomes must be binary; additive outcomes only need to be finite.
    #[error("row {row}: outcome {value} is invalid on the relative scale (must be 0 or 1)")]
    NegativeOutcomeOnRelativeScale { row: usize, value: f64 },

    #[error("row {row}: cannot parse `{value}` in column `{column}`")]
    UnparseableCell {
        row: usize,
        column: String,
        value: String,
    },

    #[error("score column `{column}` has {distinct} distinct values; {k} bins requested")]
    DegenerateScore {
        column: String,
        distinct: usize,
        k: usize,
    },

    #[error("group `{group}` has {n} rows; at least {min} required")]
    GroupTooSmall { group: String, n: usize, min: usize },

    #[error("group `{group}` has no {arm} rows")]
    EmptyArm { group: String, arm: &'static str },

    /// Ratio-scale estimators need a strictly positive control-arm mean.
    #[error("group `{group}`: control-arm mean outcome is not strictly positive")]
    ZeroControlMean { group: String },

    #[error("group `{group}`: regression design matrix is rank deficient")]
    RankDeficientDesign { group: String },

    #[error("group `{group}`: control column `{column}` has zero variance")]
    ZeroVarianceControl { group: String, column: String },

    #[error("group `{group}`: requested split subset contains no rows")]
    EmptySplit { group: String },

    #[error("group `{group}`: no positive outcomes in the {arm} arm")]
    NoPositiveOutcomes { group: String, arm: &'static str },

    #[error("nonpositive baseline prediction: {detail}")]
    NonpositiveBaseline { detail: String },

    #[error("group `{group}`: {n_failed} of {n_boot} bootstrap replicates failed")]
    BootstrapDegenerate {
        group: String,
        n_failed: usize,
        n_boot: usize,
    },

    #[error("cross-group comparison requires at least two groups")]
    SingleGroup,

    #[error("alpha must lie strictly between 0 and 1, got {alpha}")]
    InvalidAlpha { alpha: f64 },

    #[error("group `{group}` is not covered by the debias plan")]
    UnknownGroupInPlan { group: String },

    /// A plan built on the mitigation half must not be scored on that same half.
    #[error("debias plan was fitted on the mitigation half; evaluating it there would leak")]
    PlanHalfLeakage,

    #[error("calibration requires at least {needed} groups, got {got}")]
    TooFewGroups { needed: usize, got: usize },

    #[error("group `{group}`: log-family calibration requires strictly positive effects")]
    NonpositiveGateForLogFamily { group: String },

    #[error("group `{group}`: calibration weight must be positive and finite")]
    ZeroWeight { group: String },

    #[error("sigma must be strictly positive, got {sigma}")]
    NonpositiveSigma { sigma: f64 },

    #[error("invalid policy economics: {msg}")]
    InvalidEconomics { msg: String },

    #[error("propensity must lie strictly inside (0, 1), got {p}")]
    DegeneratePropensity { p: f64 },

    #[error("invalid simulation parameters: {msg}")]
    InvalidDistributionParams { msg: String },

    #[error("requested sample of {requested} rows exceeds population of {available}")]
    SampleTooLarge { requested: usize, available: usize },

    #[error("unknown strategy `{name}`; expected none|naive|me|mse-|mse+")]
    InvalidStrategy { name: String },

    #[error("{method} requires the {required} scale, got {got}")]
    ScaleMismatch {
        method: &'static str,
        required: &'static str,
        got: &'static str,
    },

    #[error("invalid configuration: {msg}")]
    InvalidConfig { msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Non-fatal conditions surfaced alongside results instead of aborting a run.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Warning {
    /// Group size below the configured minimum.
    SmallGroup { group: String, n: usize, min: usize },
    /// Relative-scale predictions at or below zero; kept, but log-family ops will reject them.
    NonpositiveCatePred { rows: usize },
    /// Relative scale without baseline predictions: collapse weights fall back to uniform.
    MissingBaselinePrediction { group: String },
    /// All bootstrap replicates identical; the Wald test is vacuous for this group.
    ZeroStandardError { group: String },
}

impl std::fmt::Display for Warning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Warning::SmallGroup { group, n, min } => {
                write!(f, "group `{group}` has {n} rows, below the minimum of {min}")
            }
            Warning::NonpositiveCatePred { rows } => {
                write!(f, "{rows} relative-scale predictions are <= 0")
            }
            Warning::MissingBaselinePrediction { group } => write!(
                f,
                "group `{group}` lacks baseline predictions; using uniform collapse weights"
            ),
            Warning::ZeroStandardError { group } => write!(
                f,
                "group `{group}`: bootstrap standard error is zero; test not rejected"
            ),
        }
    }
}
