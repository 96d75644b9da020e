use gatebias_core::error::Result;
use gatebias_core::{evaluate_end_to_end, EvalConfig, EvalOutcome, FractionSpec};

use crate::args::EvaluateArgs;
use crate::config::{self, GroupingOptions, RunConfig};
use crate::report::{self, TidyTable, ALL_GROUPS, NO_STRATEGY};

pub fn run(args: &EvaluateArgs) -> Result<()> {
    let (ds, columns) = config::load_input(&args.data)?;
    let estimator = config::build_estimator(&args.estimator)?;
    // Mean-error starts at the family-wise level; the protocol applies its
    // own Bonferroni adjustment.
    let strategies = config::parse_strategies(&args.strategies, args.stats.alpha)?;
    let eval_cfg = EvalConfig {
        strategies: strategies.clone(),
        alpha: args.stats.alpha,
        n_boot: args.stats.n_boot,
        folds: args.folds,
        seed: args.stats.seed,
        estimation_fractions: FractionSpec::Uniform(args.estimation_fraction),
        estimator: estimator.clone(),
        bonferroni: !args.no_bonferroni,
    };
    let outcome: EvalOutcome = evaluate_end_to_end(&ds, &eval_cfg)?;

    let mut table = TidyTable::new();
    for (key, m) in &outcome.metrics.per_strategy {
        table.push(ALL_GROUPS, key, "rmse", m.rmse);
        table.push(ALL_GROUPS, key, "mae", m.mae);
        table.push_opt(ALL_GROUPS, key, "rmsed", m.rmsed);
        table.push_opt(ALL_GROUPS, key, "maed", m.maed);
        table.push(ALL_GROUPS, key, "min_abs", m.min_abs);
        table.push(ALL_GROUPS, key, "max_abs", m.max_abs);
        table.push_opt(ALL_GROUPS, key, "rmse_sd", m.rmse_sd);
        table.push_opt(ALL_GROUPS, key, "mae_sd", m.mae_sd);
        if let Some(p) = &m.pct_change_vs_nodebias {
            table.push_opt(ALL_GROUPS, key, "pct_rmse", p.rmse);
            table.push_opt(ALL_GROUPS, key, "pct_mae", p.mae);
            table.push_opt(ALL_GROUPS, key, "pct_rmsed", p.rmsed);
            table.push_opt(ALL_GROUPS, key, "pct_maed", p.maed);
            table.push_opt(ALL_GROUPS, key, "pct_min_abs", p.min_abs);
            table.push_opt(ALL_GROUPS, key, "pct_max_abs", p.max_abs);
        }
    }
    for (key, residuals) in &outcome.residuals {
        for r in residuals {
            table.push(&r.group, key, "residual", r.value);
            table.push(&r.group, key, "residual_sigma_hat", r.sigma_hat);
            table.push_bool(&r.group, key, "residual_detected", r.detected);
        }
    }
    for (key, plan) in &outcome.plans {
        for (group, c) in &plan.groups {
            table.push(group, key, "gamma", c.gamma);
            table.push(group, key, "correction", c.correction);
        }
    }
    table.push(ALL_GROUPS, NO_STRATEGY, "alpha_adjusted", outcome.alpha_adjusted);

    let mut warnings = ds.warnings.clone();
    warnings.extend(outcome.warnings.iter().cloned());

    let cfg = RunConfig {
        command: "evaluate".into(),
        input: Some(config::path_string(&args.data.input)),
        report: args.output.report.as_deref().map(config::path_string),
        table: args.output.table.as_deref().map(config::path_string),
        scale: ds.scale,
        columns,
        gate: estimator,
        strategies,
        alpha: args.stats.alpha,
        n_boot: args.stats.n_boot,
        folds: args.folds,
        seed: args.stats.seed,
        grouping: GroupingOptions {
            estimation_fraction: args.estimation_fraction,
            half: "detect".into(),
            quantile_groups: args.data.quantile_groups,
            score_column: args.data.score_column.clone(),
            min_group: args.data.min_group,
        },
        ..RunConfig::default()
    };
    report::emit(&cfg, &outcome, &warnings, &table)
}
