use std::fs::File;

use serde::Serialize;

use gatebias_core::error::Result;
use gatebias_core::{draw_sample, generate_population, write_dataset, GroupTruth, SimConfig};

use crate::args::SimulateArgs;
use crate::config::{self, RunConfig};
use crate::report::{self, TidyTable, NO_STRATEGY};

#[derive(Serialize)]
struct SimulateResult {
    design: SimConfig,
    draw_seed: u64,
    population_n: usize,
    sample_n: usize,
    truth: Vec<GroupTruth>,
    out: String,
    truth_out: Option<String>,
    population_out: Option<String>,
}

/// Sidecar document scoring tools consume alongside the sample CSV.
#[derive(Serialize)]
struct TruthSidecar<'a> {
    design: &'a SimConfig,
    draw_seed: u64,
    population_n: usize,
    sample_n: usize,
    truth: &'a [GroupTruth],
}

fn resolve_design(args: &SimulateArgs) -> Result<SimConfig> {
    let mut design: SimConfig = match &args.config {
        Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
        None => SimConfig::default(),
    };
    if let Some(n) = args.n_population {
        design.n_population = n;
    }
    if let Some(v) = &args.group_props {
        design.group_props = v.clone();
    }
    if let Some(v) = &args.zeta {
        design.zeta = v.clone();
    }
    if let Some(v) = &args.beta {
        design.beta = v.clone();
    }
    if let Some(v) = &args.rho {
        design.rho = v.clone();
    }
    if let Some(v) = &args.estimation_fractions {
        design.estimation_fractions = v.clone();
    }
    if let Some(seed) = args.seed {
        design.seed = seed;
    }
    if let Some(n) = args.sample_size {
        design.sample_size = n;
    }
    Ok(design)
}

pub fn run(args: &SimulateArgs) -> Result<()> {
    let design = resolve_design(args)?;
    let population = generate_population(&design)?;
    let draw_seed = args.draw_seed.unwrap_or(design.seed);
    let (sample, _split) = draw_sample(&population, design.sample_size, draw_seed)?;

    write_dataset(&sample, File::create(&args.out)?)?;
    if let Some(path) = &args.population_out {
        write_dataset(&population.dataset, File::create(path)?)?;
    }
    if let Some(path) = &args.truth_out {
        let sidecar = TruthSidecar {
            design: &design,
            draw_seed,
            population_n: population.dataset.n(),
            sample_n: sample.n(),
            truth: &population.truth,
        };
        let mut json = serde_json::to_string_pretty(&sidecar)?;
        json.push('\n');
        std::fs::write(path, json)?;
    }

    let mut table = TidyTable::new();
    for t in &population.truth {
        table.push(&t.group, NO_STRATEGY, "true_gate", t.true_gate);
        table.push(&t.group, NO_STRATEGY, "beta", t.beta);
        table.push(&t.group, NO_STRATEGY, "realized_bias", t.realized_bias);
        table.push(&t.group, NO_STRATEGY, "outcome_variance", t.outcome_variance);
        table.push(&t.group, NO_STRATEGY, "n", t.n as f64);
    }

    let cfg = RunConfig {
        command: "simulate".into(),
        report: args.output.report.as_deref().map(config::path_string),
        table: args.output.table.as_deref().map(config::path_string),
        seed: design.seed,
        ..RunConfig::default()
    };
    let result = SimulateResult {
        population_n: population.dataset.n(),
        sample_n: sample.n(),
        truth: population.truth.clone(),
        draw_seed,
        design,
        out: config::path_string(&args.out),
        truth_out: args.truth_out.as_deref().map(config::path_string),
        population_out: args.population_out.as_deref().map(config::path_string),
    };
    report::emit(&cfg, &result, &sample.warnings, &table)
}
