use serde::Serialize;

use gatebias_core::error::Result;
use gatebias_core::{
    detect_groups, four_way_split, DetectionConfig, DetectionOutcome, FractionSpec,
};

use crate::args::DetectArgs;
use crate::config::{self, GroupingOptions, RunConfig};
use crate::report::{self, TidyTable, ALL_GROUPS, NO_STRATEGY};

#[derive(Serialize)]
struct DetectResult {
    n_rows: usize,
    groups: Vec<String>,
    detection: DetectionOutcome,
}

pub fn run(args: &DetectArgs) -> Result<()> {
    let (ds, columns) = config::load_input(&args.data)?;
    let estimator = config::build_estimator(&args.estimator)?;
    let split = four_way_split(
        &ds,
        &FractionSpec::Uniform(args.estimation_fraction),
        args.stats.seed,
    )?;
    let views = ds.group_views();
    let det_cfg = DetectionConfig {
        alpha: args.stats.alpha,
        n_boot: args.stats.n_boot,
        seed: args.stats.seed,
        n_tests: args.n_tests,
    };
    let detection = detect_groups(&views, ds.scale, &estimator, &split, args.half, &det_cfg)?;

    let mut table = TidyTable::new();
    for e in &detection.per_group {
        table.push(&e.group, NO_STRATEGY, "b_hat", e.b_hat);
        table.push(&e.group, NO_STRATEGY, "sigma_hat", e.sigma_hat);
        table.push(&e.group, NO_STRATEGY, "z_stat", e.z_stat);
        table.push(&e.group, NO_STRATEGY, "p_value", e.p_value);
        table.push_bool(&e.group, NO_STRATEGY, "detected", e.detected);
        table.push(&e.group, NO_STRATEGY, "n", e.n as f64);
    }
    for c in &detection.cross_group {
        table.push(&c.group, NO_STRATEGY, "cross_value", c.value);
        table.push(&c.group, NO_STRATEGY, "cross_p_value", c.p_value);
        table.push_bool(&c.group, NO_STRATEGY, "cross_detected", c.detected);
    }
    table.push(ALL_GROUPS, NO_STRATEGY, "alpha_adjusted", detection.alpha_adjusted);

    let mut warnings = ds.warnings.clone();
    warnings.extend(detection.warnings.iter().cloned());

    let cfg = RunConfig {
        command: "detect".into(),
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
    let result = DetectResult {
        n_rows: ds.n(),
        groups: ds.groups.clone(),
        detection,
    };
    report::emit(&cfg, &result, &warnings, &table)
}
