use serde::Serialize;

use gatebias_core::error::{Error, Result};
use gatebias_core::{
    build_plan, detect_groups, disagreement_by_distance, disagreement_threshold_grid,
    empirical_disagreement_share, four_way_split, ipw_profit, profit_delta, DebiasPlan,
    DetectionConfig, DetectionOutcome, DisagreementShares, DistanceBin, FractionSpec, GroupView,
    Half, PolicyEconomics, PolicySpec, ProfitDeltaReport, ShrinkageStrategy, ThresholdPoint,
};

use crate::args::{EvalHalf, TargetArgs};
use crate::config::{self, Economics, GroupingOptions, RunConfig};
use crate::report::{self, TidyTable, ALL_GROUPS, NO_STRATEGY};

#[derive(Serialize)]
struct TreatedShares {
    group: String,
    base: f64,
    debiased: f64,
    n: usize,
}

#[derive(Serialize)]
struct StrategyTargeting {
    strategy: String,
    plan: DebiasPlan,
    mean_abs_correction: f64,
    treated_share_base: f64,
    treated_share_debiased: f64,
    per_group_treated: Vec<TreatedShares>,
    disagreement: DisagreementShares,
    profit: ProfitDeltaReport,
    distance_bins: Option<Vec<DistanceBin>>,
    cost_grid: Option<Vec<ThresholdPoint>>,
}

#[derive(Serialize)]
struct TargetResult {
    economics: PolicyEconomics,
    detection: Option<DetectionOutcome>,
    strategies: Vec<StrategyTargeting>,
}

pub fn run(args: &TargetArgs) -> Result<()> {
    let (ds, columns) = config::load_input(&args.data)?;
    let estimator = config::build_estimator(&args.estimator)?;
    let economics = PolicyEconomics::new(args.revenue, args.cost)?;
    let split = four_way_split(
        &ds,
        &FractionSpec::Uniform(args.estimation_fraction),
        args.stats.seed,
    )?;
    let views = ds.group_views();

    // Plans always come from the detection half; policies are priced on the
    // rows selected by --half so corrections are not scored on the data that
    // produced them.
    let (detection, plans) = match &args.plan {
        Some(path) => {
            let plan: DebiasPlan = serde_json::from_str(&std::fs::read_to_string(path)?)?;
            (None, vec![plan])
        }
        None => {
            let det_cfg = DetectionConfig {
                alpha: args.stats.alpha,
                n_boot: args.stats.n_boot,
                seed: args.stats.seed,
                n_tests: args.n_tests,
            };
            let detection =
                detect_groups(&views, ds.scale, &estimator, &split, Half::Detect, &det_cfg)?;
            let strategies: Vec<ShrinkageStrategy> =
                config::parse_strategies(&args.strategies, detection.alpha_adjusted)?;
            if strategies.is_empty() {
                return Err(Error::InvalidConfig {
                    msg: "target needs at least one strategy".into(),
                });
            }
            let plans = strategies
                .iter()
                .map(|s| build_plan(*s, &detection.per_group, Half::Detect))
                .collect::<Result<Vec<_>>>()?;
            (Some(detection), plans)
        }
    };

    let restricted: Vec<GroupView<'_>>;
    let eval_views: &[GroupView<'_>] = match args.half {
        EvalHalf::Half(h) => {
            restricted = views.iter().map(|v| v.restrict_half(&split, h)).collect();
            &restricted
        }
        EvalHalf::All => &views,
    };

    let mut table = TidyTable::new();
    table.push(ALL_GROUPS, NO_STRATEGY, "threshold", economics.threshold);

    let mut strategy_results = Vec::with_capacity(plans.len());
    for plan in plans {
        let key = plan.strategy.key().to_string();
        let base = PolicySpec::base(economics);
        let debiased = PolicySpec::debiased(economics, plan.clone());

        let profit = profit_delta(eval_views, &base, &debiased, args.p, args.variance)?;
        let disagreement = empirical_disagreement_share(eval_views, &base, &debiased)?;
        let mean_abs_correction = if plan.groups.is_empty() {
            0.0
        } else {
            plan.groups.values().map(|c| c.correction.abs()).sum::<f64>()
                / plan.groups.len() as f64
        };

        let mut per_group_treated = Vec::with_capacity(eval_views.len());
        let mut share_base = 0.0;
        let mut share_deb = 0.0;
        let total: usize = eval_views.iter().map(|v| v.n()).sum();
        for view in eval_views {
            let pb = ipw_profit(view, &base, args.p, args.variance)?;
            let pd = ipw_profit(view, &debiased, args.p, args.variance)?;
            share_base += pb.treated_share * view.n() as f64 / total as f64;
            share_deb += pd.treated_share * view.n() as f64 / total as f64;
            per_group_treated.push(TreatedShares {
                group: view.group.clone(),
                base: pb.treated_share,
                debiased: pd.treated_share,
                n: view.n(),
            });
        }

        let distance_bins = match args.distance_bins {
            Some(bins) => Some(disagreement_by_distance(eval_views, &base, &debiased, bins)?),
            None => None,
        };
        let cost_grid = match &args.cost_grid {
            Some(costs) => Some(disagreement_threshold_grid(
                eval_views,
                args.revenue,
                costs,
                &plan,
            )?),
            None => None,
        };

        table.push(ALL_GROUPS, &key, "mean_abs_correction", mean_abs_correction);
        table.push(ALL_GROUPS, &key, "treated_share_base", share_base);
        table.push(ALL_GROUPS, &key, "treated_share_debiased", share_deb);
        table.push(ALL_GROUPS, &key, "disagreement_share", disagreement.overall);
        table.push(ALL_GROUPS, &key, "profit_base", profit.base_value);
        table.push(ALL_GROUPS, &key, "profit_debiased", profit.debiased_value);
        table.push(ALL_GROUPS, &key, "profit_delta", profit.delta);
        table.push(ALL_GROUPS, &key, "delta_variance", profit.variance);
        table.push(ALL_GROUPS, &key, "ci_low", profit.ci_low);
        table.push(ALL_GROUPS, &key, "ci_high", profit.ci_high);
        table.push_opt(ALL_GROUPS, &key, "relative_pct", profit.relative_pct);
        for pg in &profit.per_group {
            table.push(&pg.group, &key, "profit_base", pg.base_value);
            table.push(&pg.group, &key, "profit_debiased", pg.debiased_value);
            table.push(&pg.group, &key, "profit_delta", pg.delta);
            table.push(&pg.group, &key, "disagreement_share", pg.disagreement_share);
        }
        for ts in &per_group_treated {
            table.push(&ts.group, &key, "treated_share_base", ts.base);
            table.push(&ts.group, &key, "treated_share_debiased", ts.debiased);
        }
        for (group, c) in &plan.groups {
            table.push(group, &key, "correction", c.correction);
        }

        strategy_results.push(StrategyTargeting {
            strategy: key,
            plan,
            mean_abs_correction,
            treated_share_base: share_base,
            treated_share_debiased: share_deb,
            per_group_treated,
            disagreement,
            profit,
            distance_bins,
            cost_grid,
        });
    }

    let mut warnings = ds.warnings.clone();
    if let Some(d) = &detection {
        warnings.extend(d.warnings.iter().cloned());
    }

    let cfg = RunConfig {
        command: "target".into(),
        input: Some(config::path_string(&args.data.input)),
        report: args.output.report.as_deref().map(config::path_string),
        table: args.output.table.as_deref().map(config::path_string),
        scale: ds.scale,
        columns,
        gate: estimator,
        strategies: strategy_results.iter().map(|s| s.plan.strategy).collect(),
        alpha: args.stats.alpha,
        n_boot: args.stats.n_boot,
        seed: args.stats.seed,
        economics: Some(Economics {
            revenue: args.revenue,
            cost: args.cost,
        }),
        grouping: GroupingOptions {
            estimation_fraction: args.estimation_fraction,
            half: args.half.as_str().into(),
            quantile_groups: args.data.quantile_groups,
            score_column: args.data.score_column.clone(),
            min_group: args.data.min_group,
        },
        ..RunConfig::default()
    };
    let result = TargetResult {
        economics,
        detection,
        strategies: strategy_results,
    };
    report::emit(&cfg, &result, &warnings, &table)
}
