//! Resolved run configuration echoed into every report, plus the shared
//! input-loading and estimator-resolution plumbing.

use std::path::Path;

use serde::{Deserialize, Serialize};

use gatebias_core::error::{Error, Result};
use gatebias_core::{
    load_dataset_path, quantile_grouping, ColumnMap, Dataset, EffectScale, GateEstimator,
    ShrinkageStrategy,
};

use crate::args::{DataArgs, EstimatorArgs};

/// Revenue and cost per unit, before the threshold is derived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Economics {
    pub revenue: f64,
    pub cost: f64,
}

/// How rows were grouped and split for this run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupingOptions {
    /// Estimation-subset fraction within each half.
    pub estimation_fraction: f64,
    /// Which rows the command operated on: detect, mitigate, or all.
    pub half: String,
    /// Quantile-bin count when groups were derived from a score column.
    pub quantile_groups: Option<usize>,
    pub score_column: Option<String>,
    /// Small-group warning threshold.
    pub min_group: Option<usize>,
}

impl Default for GroupingOptions {
    fn default() -> Self {
        GroupingOptions {
            estimation_fraction: 0.5,
            half: "detect".into(),
            quantile_groups: None,
            score_column: None,
            min_group: None,
        }
    }
}

/// The fully resolved configuration of one command invocation. Every field
/// has a default so partial configs deserialize; serialization round-trips
/// losslessly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub command: String,
    pub input: Option<String>,
    pub report: Option<String>,
    pub table: Option<String>,
    pub scale: EffectScale,
    pub columns: ColumnMap,
    pub gate: GateEstimator,
    pub strategies: Vec<ShrinkageStrategy>,
    pub alpha: f64,
    pub n_boot: usize,
    pub folds: usize,
    pub seed: u64,
    pub economics: Option<Economics>,
    pub grouping: GroupingOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            command: String::new(),
            input: None,
            report: None,
            table: None,
            scale: EffectScale::Relative,
            columns: ColumnMap::default(),
            gate: GateEstimator::Means,
            strategies: Vec::new(),
            alpha: 0.05,
            n_boot: 999,
            folds: 1,
            seed: 17,
            economics: None,
            grouping: GroupingOptions::default(),
        }
    }
}

pub fn path_string(path: &Path) -> String {
    path.display().to_string()
}

/// Loads the input CSV, applying column overrides and optional quantile
/// grouping. Returns the dataset together with the resolved column map.
pub fn load_input(args: &DataArgs) -> Result<(Dataset, ColumnMap)> {
    let columns = ColumnMap::default().with_overrides(&args.columns)?;
    let mut ds = load_dataset_path(&args.input, &columns, args.scale, args.min_group)?;
    if let Some(k) = args.quantile_groups {
        let col = args
            .score_column
            .clone()
            .unwrap_or_else(|| columns.score.clone());
        ds = quantile_grouping(&ds, &col, k)?;
    }
    Ok((ds, columns))
}

pub fn build_estimator(args: &EstimatorArgs) -> Result<GateEstimator> {
    match args.gate_method.trim().to_ascii_lowercase().as_str() {
        "means" => Ok(GateEstimator::Means),
        "lin" => {
            if args.covariates.is_empty() {
                return Err(Error::InvalidConfig {
                    msg: "--gate-method lin needs --covariates".into(),
                });
            }
            Ok(GateEstimator::Lin {
                covariates: args.covariates.clone(),
            })
        }
        "cuped" => {
            let control = args.control.clone().ok_or_else(|| Error::InvalidConfig {
                msg: "--gate-method cuped needs --control".into(),
            })?;
            Ok(GateEstimator::Cuped { control })
        }
        "converted-only" | "converted_only" => Ok(GateEstimator::ConvertedOnly),
        other => Err(Error::InvalidConfig {
            msg: format!("unknown gate method `{other}` (means|lin|cuped|converted-only)"),
        }),
    }
}

/// Parses strategy names, deduplicates, and pins the mean-error test level.
pub fn parse_strategies(names: &[String], me_alpha: f64) -> Result<Vec<ShrinkageStrategy>> {
    let mut out: Vec<ShrinkageStrategy> = Vec::with_capacity(names.len());
    for name in names {
        let parsed: ShrinkageStrategy = name.parse()?;
        let resolved = match parsed {
            ShrinkageStrategy::MeanError { .. } => ShrinkageStrategy::MeanError { alpha: me_alpha },
            other => other,
        };
        if !out.contains(&resolved) {
            out.push(resolved);
        }
    }
    Ok(out)
}
