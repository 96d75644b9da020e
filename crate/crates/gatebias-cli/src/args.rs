//! Command-line surface: six subcommands sharing a common flag vocabulary.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use gatebias_core::{EffectScale, Half, VarianceKind};

#[derive(Debug, Parser)]
#[command(
    name = "gatebias",
    version,
    about = "Detect, correct, and price group-level bias in CATE predictions",
    propagate_version = true
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate per-group and cross-group prediction bias with Wald tests.
    Detect(DetectArgs),
    /// Build a shrinkage correction plan and optionally apply it.
    Mitigate(MitigateArgs),
    /// Run the split/detect/correct/score protocol over repeated folds.
    Evaluate(EvaluateArgs),
    /// Fit calibration maps from predicted to experimental group effects.
    Calibrate(CalibrateArgs),
    /// Price corrections: decision disagreement and IPW profit impact.
    Target(TargetArgs),
    /// Generate a synthetic experiment with known group-level bias.
    Simulate(SimulateArgs),
}

/// Input dataset flags shared by every command that reads a CSV.
#[derive(Debug, Args)]
pub struct DataArgs {
    /// Experiment CSV with group, treatment, outcome, and prediction columns.
    #[arg(long, value_name = "FILE")]
    pub input: PathBuf,

    /// Column remapping, e.g. `group=country,outcome=converted`.
    #[arg(long, value_name = "SPEC", default_value = "")]
    pub columns: String,

    /// Effect scale of the predictions and GATEs: additive or relative.
    #[arg(long, value_parser = parse_scale, default_value = "relative")]
    pub scale: EffectScale,

    /// Attach a warning to groups smaller than this.
    #[arg(long, value_name = "N")]
    pub min_group: Option<usize>,

    /// Replace group labels with K quantile bins of the score column.
    #[arg(long, value_name = "K")]
    pub quantile_groups: Option<usize>,

    /// Numeric column binned by --quantile-groups [default: score].
    #[arg(long, value_name = "COL")]
    pub score_column: Option<String>,
}

/// Significance, bootstrap, and seeding flags.
#[derive(Debug, Args)]
pub struct StatArgs {
    /// Family-wise significance level before multiplicity adjustment.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,

    /// Stratified bootstrap replicates per group.
    #[arg(long, value_name = "B", default_value_t = 999)]
    pub n_boot: usize,

    /// Seed for splitting and bootstrap resampling.
    #[arg(long, env = "GATEBIAS_SEED", default_value_t = 17)]
    pub seed: u64,
}

/// Experimental GATE estimator selection.
#[derive(Debug, Args)]
pub struct EstimatorArgs {
    /// GATE estimator: means, lin, cuped, or converted-only.
    #[arg(long, value_name = "METHOD", default_value = "means")]
    pub gate_method: String,

    /// Covariate columns for --gate-method lin.
    #[arg(long, value_delimiter = ',', value_name = "COLS")]
    pub covariates: Vec<String>,

    /// Pre-period control column for --gate-method cuped.
    #[arg(long, value_name = "COL")]
    pub control: Option<String>,
}

/// Report and table destinations.
#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Write the JSON report here instead of stdout.
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,

    /// Write a tidy CSV table (group,strategy,metric,value) here.
    #[arg(long, value_name = "FILE")]
    pub table: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub stats: StatArgs,
    #[command(flatten)]
    pub estimator: EstimatorArgs,
    #[command(flatten)]
    pub output: OutputArgs,

    /// Estimation-subset fraction within each half of the split.
    #[arg(long, value_name = "F", default_value_t = 0.5)]
    pub estimation_fraction: f64,

    /// Half whose estimates are tested: detect or mitigate.
    #[arg(long, value_parser = parse_half, default_value = "detect")]
    pub half: Half,

    /// Bonferroni test count [default: one per-group plus one cross-group
    /// test per group].
    #[arg(long, value_name = "N")]
    pub n_tests: Option<usize>,
}

#[derive(Debug, Args)]
pub struct MitigateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub stats: StatArgs,
    #[command(flatten)]
    pub estimator: EstimatorArgs,
    #[command(flatten)]
    pub output: OutputArgs,

    /// Estimation-subset fraction within each half of the split.
    #[arg(long, value_name = "F", default_value_t = 0.5)]
    pub estimation_fraction: f64,

    /// Half whose estimates feed the plan: detect or mitigate.
    #[arg(long, value_parser = parse_half, default_value = "detect")]
    pub half: Half,

    /// Bonferroni test count [default: one per-group plus one cross-group
    /// test per group].
    #[arg(long, value_name = "N")]
    pub n_tests: Option<usize>,

    /// Shrinkage strategy: none, naive, me, mse-, or mse+. The me threshold
    /// test runs at the same adjusted level as detection.
    #[arg(long, default_value = "mse-")]
    pub strategy: String,

    /// Write the correction plan as JSON for later `target --plan` runs.
    #[arg(long, value_name = "FILE")]
    pub plan_out: Option<PathBuf>,

    /// Apply the plan and write the corrected dataset CSV here.
    #[arg(long, value_name = "FILE")]
    pub apply_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub stats: StatArgs,
    #[command(flatten)]
    pub estimator: EstimatorArgs,
    #[command(flatten)]
    pub output: OutputArgs,

    /// Estimation-subset fraction within each half of the split.
    #[arg(long, value_name = "F", default_value_t = 0.5)]
    pub estimation_fraction: f64,

    /// Strategies to score; the no-debias baseline is always included.
    #[arg(
        long,
        value_delimiter = ',',
        value_name = "LIST",
        default_value = "naive,me,mse-,mse+"
    )]
    pub strategies: Vec<String>,

    /// Independent re-splits; metrics are averaged across them.
    #[arg(long, default_value_t = 10)]
    pub folds: usize,

    /// Run every test at the family-wise level instead of alpha / (4 groups).
    #[arg(long)]
    pub no_bonferroni: bool,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub stats: StatArgs,
    #[command(flatten)]
    pub estimator: EstimatorArgs,
    #[command(flatten)]
    pub output: OutputArgs,

    /// Estimation-subset fraction within each half of the split.
    #[arg(long, value_name = "F", default_value_t = 0.5)]
    pub estimation_fraction: f64,

    /// Half the calibration points are built from: detect or mitigate.
    #[arg(long, value_parser = parse_half, default_value = "detect")]
    pub half: Half,

    /// Calibration families to fit [default: all four; log families are
    /// omitted on the additive scale].
    #[arg(long, value_delimiter = ',', value_name = "LIST")]
    pub families: Option<Vec<String>>,

    /// Point weights: size (estimation-subset rows) or precision (1/sigma^2
    /// from the detection bootstrap).
    #[arg(long, default_value = "size")]
    pub weights: String,
}

#[derive(Debug, Args)]
pub struct TargetArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub stats: StatArgs,
    #[command(flatten)]
    pub estimator: EstimatorArgs,
    #[command(flatten)]
    pub output: OutputArgs,

    /// Estimation-subset fraction within each half of the split.
    #[arg(long, value_name = "F", default_value_t = 0.5)]
    pub estimation_fraction: f64,

    /// Rows the policies are evaluated on: detect, mitigate, or all.
    #[arg(long, value_parser = parse_eval_half, default_value = "mitigate")]
    pub half: EvalHalf,

    /// Bonferroni test count for the detection pass [default: one per-group
    /// plus one cross-group test per group].
    #[arg(long, value_name = "N")]
    pub n_tests: Option<usize>,

    /// Correction strategies to price, each against the uncorrected policy.
    #[arg(
        long,
        value_delimiter = ',',
        value_name = "LIST",
        default_value = "naive,me,mse-,mse+",
        conflicts_with = "plan"
    )]
    pub strategies: Vec<String>,

    /// Load a correction plan from JSON instead of running detection.
    #[arg(long, value_name = "FILE")]
    pub plan: Option<PathBuf>,

    /// Revenue per converted unit.
    #[arg(long, value_name = "R")]
    pub revenue: f64,

    /// Cost per treated unit; must lie strictly inside (0, revenue).
    #[arg(long, value_name = "C")]
    pub cost: f64,

    /// Known assignment propensity [default: each group's treated fraction].
    #[arg(long, value_name = "P")]
    pub p: Option<f64>,

    /// Profit variance: as-printed or sample.
    #[arg(long, value_parser = parse_variance, default_value = "as-printed")]
    pub variance: VarianceKind,

    /// Also stratify disagreement into this many boundary-distance bins.
    #[arg(long, value_name = "N")]
    pub distance_bins: Option<usize>,

    /// Also sweep disagreement over these per-unit costs.
    #[arg(long, value_delimiter = ',', value_name = "LIST")]
    pub cost_grid: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub output: OutputArgs,

    /// Write the drawn sample CSV here.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,

    /// Write the ground-truth sidecar JSON here.
    #[arg(long = "truth", value_name = "FILE")]
    pub truth_out: Option<PathBuf>,

    /// Also write the full population CSV here.
    #[arg(long, value_name = "FILE")]
    pub population_out: Option<PathBuf>,

    /// Full simulation design as JSON; flags below override its fields.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Generation seed [default: the design's seed].
    #[arg(long, env = "GATEBIAS_SEED")]
    pub seed: Option<u64>,

    /// Sampling seed [default: the generation seed].
    #[arg(long, value_name = "SEED")]
    pub draw_seed: Option<u64>,

    /// Rows to draw from the population [default: the design's sample size].
    #[arg(long, value_name = "N")]
    pub sample_size: Option<usize>,

    /// Population size override.
    #[arg(long, value_name = "N")]
    pub n_population: Option<usize>,

    /// Group membership probabilities; must sum to 1.
    #[arg(long, value_delimiter = ',', value_name = "LIST")]
    pub group_props: Option<Vec<f64>>,

    /// Per-group effect scalings.
    #[arg(long, value_delimiter = ',', value_name = "LIST")]
    pub zeta: Option<Vec<f64>>,

    /// Per-group additive prediction biases.
    #[arg(long, value_delimiter = ',', value_name = "LIST")]
    pub beta: Option<Vec<f64>>,

    /// Per-group prediction noise multipliers.
    #[arg(long, value_delimiter = ',', value_name = "LIST")]
    pub rho: Option<Vec<f64>>,

    /// Per-group estimation fractions for the four-way split.
    #[arg(long, value_delimiter = ',', value_name = "LIST")]
    pub estimation_fractions: Option<Vec<f64>>,
}

/// Where targeting policies are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalHalf {
    Half(Half),
    All,
}

impl EvalHalf {
    pub fn as_str(self) -> &'static str {
        match self {
            EvalHalf::Half(h) => h.as_str(),
            EvalHalf::All => "all",
        }
    }
}

fn parse_scale(s: &str) -> Result<EffectScale, String> {
    match s.trim().to_ascii_lowercase().as_str() {
        "additive" => Ok(EffectScale::Additive),
        "relative" => Ok(EffectScale::Relative),
        other => Err(format!("unknown scale `{other}` (additive|relative)")),
    }
}

fn parse_half(s: &str) -> Result<Half, String> {
    match s.trim().to_ascii_lowercase().as_str() {
        "detect" => Ok(Half::Detect),
        "mitigate" => Ok(Half::Mitigate),
        other => Err(format!("unknown half `{other}` (detect|mitigate)")),
    }
}

fn parse_eval_half(s: &str) -> Result<EvalHalf, String> {
    match s.trim().to_ascii_lowercase().as_str() {
        "all" => Ok(EvalHalf::All),
        other => parse_half(other).map(EvalHalf::Half),
    }
}

fn parse_variance(s: &str) -> Result<VarianceKind, String> {
    match s.trim().to_ascii_lowercase().as_str() {
        "as-printed" | "as_printed" => Ok(VarianceKind::AsPrinted),
        "sample" | "sample-plug-in" | "sample_plug_in" => Ok(VarianceKind::SamplePlugIn),
        other => Err(format!("unknown variance kind `{other}` (as-printed|sample)")),
    }
}
