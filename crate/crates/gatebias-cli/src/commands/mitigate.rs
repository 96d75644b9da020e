use std::fs::File;

use serde::Serialize;

use gatebias_core::error::Result;
use gatebias_core::{
    apply_debias, build_plan, detect_groups, four_way_split, write_dataset, DebiasPlan,
    DetectionConfig, DetectionOutcome, FractionSpec, ShrinkageStrategy,
};

use crate::args::MitigateArgs;
use crate::config::{self, GroupingOptions, RunConfig};
use crate::report::{self, TidyTable, ALL_GROUPS, NO_STRATEGY};

#[derive(Serialize)]
struct MitigateResult {
    detection: DetectionOutcome,
    plan: DebiasPlan,
    plan_out: Option<String>,
    apply_out: Option<String>,
}

pub fn run(args: &MitigateArgs) -> Result<()> {
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

    // The mean-error threshold test is one of the detection family's tests,
    // so it runs at the same adjusted level.
    let strategy = match args.strategy.parse::<ShrinkageStrategy>()? {
        ShrinkageStrategy::MeanError { .. } => ShrinkageStrategy::MeanError {
            alpha: detection.alpha_adjusted,
        },
        other => other,
    };
    let plan = build_plan(strategy, &detection.per_group, args.half)?;

    if let Some(path) = &args.plan_out {
        let mut json = serde_json::to_string_pretty(&plan)?;
        json.push('\n');
        std::fs::write(path, json)?;
    }
    if let Some(path) = &args.apply_out {
        let corrected = apply_debias(&ds, &plan)?;
        write_dataset(&corrected, File::create(path)?)?;
    }

    let key = plan.strategy.key();
    let mut table = TidyTable::new();
    for (group, c) in &plan.groups {
        table.push(group, key, "gamma", c.gamma);
        table.push(group, key, "b_hat", c.b_hat);
        table.push(group, key, "correction", c.correction);
        table.push_bool(group, key, "clamped", c.clamped);
    }
    table.push(ALL_GROUPS, NO_STRATEGY, "alpha_adjusted", detection.alpha_adjusted);

    let mut warnings = ds.warnings.clone();
    warnings.extend(detection.warnings.iter().cloned());

    let cfg = RunConfig {
        command: "mitigate".into(),
        input: Some(config::path_string(&args.data.input)),
        report: args.output.report.as_deref().map(config::path_string),
        table: args.output.table.as_deref().map(config::path_string),
        scale: ds.scale,
        columns,
        gate: estimator,
        strategies: vec![strategy],
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
    let result = MitigateResult {
        detection,
        plan,
        plan_out: args.plan_out.as_deref().map(config::path_string),
        apply_out: args.apply_out.as_deref().map(config::path_string),
    };
    report::emit(&cfg, &result, &warnings, &table)
}
