use serde::Serialize;

use gatebias_core::error::{Error, Result};
use gatebias_core::{
    calibration_points, detect_groups, fit_calibration, four_way_split, implied_gamma,
    CalibrationFamily, CalibrationFit, DetectionConfig, EffectScale, FractionSpec, GroupPoint,
    ImpliedGamma,
};

use crate::args::CalibrateArgs;
use crate::config::{self, GroupingOptions, RunConfig};
use crate::report::{self, TidyTable, ALL_GROUPS, NO_STRATEGY};

#[derive(Serialize)]
struct FamilyResult {
    fit: CalibrationFit,
    /// Weighted SSE of the fitted map against the experimental estimates.
    sse: f64,
    implied: Vec<ImpliedGamma>,
}

#[derive(Serialize)]
struct CalibrateResult {
    points: Vec<GroupPoint>,
    families: Vec<FamilyResult>,
}

pub fn run(args: &CalibrateArgs) -> Result<()> {
    let (ds, columns) = config::load_input(&args.data)?;
    let estimator = config::build_estimator(&args.estimator)?;
    let split = four_way_split(
        &ds,
        &FractionSpec::Uniform(args.estimation_fraction),
        args.stats.seed,
    )?;
    let views = ds.group_views();

    let mut points = calibration_points(&views, ds.scale, &estimator, &split, args.half)?;
    let mut detection_warnings = Vec::new();
    match args.weights.trim().to_ascii_lowercase().as_str() {
        "size" => {}
        "precision" => {
            let det_cfg = DetectionConfig {
                alpha: args.stats.alpha,
                n_boot: args.stats.n_boot,
                seed: args.stats.seed,
                n_tests: None,
            };
            let detection =
                detect_groups(&views, ds.scale, &estimator, &split, args.half, &det_cfg)?;
            for (point, est) in points.iter_mut().zip(&detection.per_group) {
                if est.sigma_hat == 0.0 {
                    return Err(Error::InvalidConfig {
                        msg: format!(
                            "group {} has a degenerate bootstrap SE; use --weights size",
                            est.group
                        ),
                    });
                }
                point.weight = 1.0 / (est.sigma_hat * est.sigma_hat);
            }
            detection_warnings = detection.warnings;
        }
        other => {
            return Err(Error::InvalidConfig {
                msg: format!("unknown weight mode `{other}` (size|precision)"),
            });
        }
    }

    let families: Vec<CalibrationFamily> = match &args.families {
        Some(names) => names
            .iter()
            .map(|n| n.parse())
            .collect::<Result<Vec<_>>>()?,
        // Log families need positive effects, which the additive scale does
        // not guarantee.
        None if ds.scale == EffectScale::Additive => {
            vec![CalibrationFamily::Affine, CalibrationFamily::Isotonic]
        }
        None => CalibrationFamily::ALL.to_vec(),
    };

    let mut table = TidyTable::new();
    for p in &points {
        table.push(&p.group, NO_STRATEGY, "predicted", p.predicted);
        table.push(&p.group, NO_STRATEGY, "experimental", p.experimental);
        table.push(&p.group, NO_STRATEGY, "weight", p.weight);
    }
    let mut results = Vec::with_capacity(families.len());
    for family in families {
        let fit = fit_calibration(family, &points)?;
        let name = family.as_str();
        let sse: f64 = points
            .iter()
            .map(|p| {
                let f = fit.fitted[&p.group];
                p.weight * (f - p.experimental) * (f - p.experimental)
            })
            .sum();
        let implied = implied_gamma(&fit, &points)?;
        for p in &points {
            table.push(&p.group, name, "fitted", fit.fitted[&p.group]);
        }
        for g in &implied {
            table.push_opt(&g.group, name, "implied_gamma", g.gamma);
            table.push_bool(&g.group, name, "gamma_flagged", g.outside_unit_interval);
        }
        table.push_opt(ALL_GROUPS, name, "intercept", fit.intercept);
        table.push_opt(ALL_GROUPS, name, "slope", fit.slope);
        table.push(ALL_GROUPS, name, "sse", sse);
        results.push(FamilyResult { fit, sse, implied });
    }

    let mut warnings = ds.warnings.clone();
    warnings.extend(detection_warnings);

    let cfg = RunConfig {
        command: "calibrate".into(),
        input: Some(config::path_string(&args.data.input)),
        report: args.output.report.as_deref().map(config::path_string),
        table: args.output.table.as_deref().map(config::path_string),
        scale: ds.scale,
        columns,
        gate: estimator,
        alpha: args.stats.alpha,
        n_boot: args.stats.n_boot,
        seed: args.stats.seed,
        grouping: GroupingOptions {
            estimation_fraction: args.estimation_fraction,
            half: args.half.as_str().into(),
            quantile_groups: args.data.quantile_groups,
            score_column: args.data.score_column.clone(),
            min_group: args.data.min_group,
        },
        ..RunConfig::default()
    };
    let result = CalibrateResult {
        points,
        families: results,
    };
    report::emit(&cfg, &result, &warnings, &table)
}
