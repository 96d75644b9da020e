//! Synthetic randomized experiments with known group-level prediction bias,
//! for validating the detection/mitigation pipeline end to end.

use std::collections::BTreeMap;

use rand::RngExt;
use rand_distr::{Beta, Distribution, Gamma, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{
    four_way_split, Dataset, EffectScale, ExperimentRow, FractionSpec, SplitAssignment,
};
use crate::error::{Error, Result};
use crate::stats;

/// Simulation design: a relative-scale experiment with per-group effect
/// scaling ζ, additive prediction bias β, and prediction noise variance
/// ϱ·Var(Y) (within group).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_population: usize,
    /// Group membership probabilities; must sum to 1.
    pub group_props: Vec<f64>,
    /// Per-group scaling of both outcome indices.
    pub zeta: Vec<f64>,
    /// Per-group additive bias added to the true conditional effect.
    pub beta: Vec<f64>,
    /// Per-group prediction noise variance as a multiple of the group's
    /// realized outcome variance.
    pub rho: Vec<f64>,
    /// Per-group estimation-subset fractions for the four-way split.
    pub estimation_fractions: Vec<f64>,
    pub seed: u64,
    /// Default sample size drawn from the population.
    pub sample_size: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_population: 200_000,
            group_props: vec![0.45, 0.20, 0.15, 0.12, 0.08],
            zeta: vec![1.0, 1.4, 0.8, 1.2, 0.6],
            beta: vec![0.05, -0.20, 0.30, -0.10, 0.25],
            rho: vec![0.5, 1.0, 1.5, 1.0, 2.0],
            estimation_fractions: vec![0.55, 0.35, 0.30, 0.25, 0.50],
            seed: 17,
            sample_size: 50_000,
        }
    }
}

impl SimConfig {
    fn validate(&self) -> Result<()> {
        let g = self.group_props.len();
        if g == 0 {
            return Err(Error::InvalidDistributionParams {
                msg: "need at least one group".into(),
            });
        }
        for (name, len) in [
            ("zeta", self.zeta.len()),
            ("beta", self.beta.len()),
            ("rho", self.rho.len()),
            ("estimation_fractions", self.estimation_fractions.len()),
        ] {
            if len != g {
                return Err(Error::InvalidDistributionParams {
                    msg: format!("{name} has {len} entries for {g} groups"),
                });
            }
        }
        let sum: f64 = self.group_props.iter().sum();
        if self.group_props.iter().any(|p| !(p.is_finite() && *p > 0.0))
            || (sum - 1.0).abs() > 1e-9
        {
            return Err(Error::InvalidDistributionParams {
                msg: format!("group proportions must be positive and sum to 1, got sum {sum}"),
            });
        }
        if self.rho.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(Error::InvalidDistributionParams {
                msg: "noise multipliers must be nonnegative".into(),
            });
        }
        if self.zeta.iter().any(|z| !(z.is_finite() && *z >= 0.0)) {
            return Err(Error::InvalidDistributionParams {
                msg: "effect scalings must be nonnegative".into(),
            });
        }
        if self.beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidDistributionParams {
                msg: "biases must be finite".into(),
            });
        }
        if self
            .estimation_fractions
            .iter()
            .any(|f| !(f.is_finite() && *f > 0.0 && *f < 1.0))
        {
            return Err(Error::InvalidDistributionParams {
                msg: "estimation fractions must lie strictly inside (0, 1)".into(),
            });
        }
        if self.n_population == 0 {
            return Err(Error::InvalidDistributionParams {
                msg: "population must be nonempty".into(),
            });
        }
        Ok(())
    }

    pub fn group_labels(&self) -> Vec<String> {
        (1..=self.group_props.len())
            .map(|i| format!("g{i}"))
            .collect()
    }

    pub fn fraction_spec(&self) -> FractionSpec {
        FractionSpec::PerGroup(
            self.group_labels()
                .into_iter()
                .zip(self.estimation_fractions.iter().copied())
                .collect(),
        )
    }
}

/// Ground truth for one simulated group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupTruth {
    pub group: String,
    /// Population ratio GATE: mean treated rate over mean control rate.
    pub true_gate: f64,
    /// Designed additive bias.
    pub beta: f64,
    /// True-weight collapse of realized predictions minus the true GATE;
    /// differs from `beta` by noise and Jensen terms.
    pub realized_bias: f64,
    /// Population variance of the realized outcome within the group.
    pub outcome_variance: f64,
    pub n: usize,
}

/// A generated population: the dataset, the latent true conditional effects
/// (aligned with rows), and per-group ground truth.
#[derive(Debug, Clone)]
pub struct SimPopulation {
    pub config: SimConfig,
    pub dataset: Dataset,
    /// True conditional effect τ(Xᵢ) per row.
    pub tau: Vec<f64>,
    pub truth: Vec<GroupTruth>,
}

struct RawRow {
    group: usize,
    x: [f64; 3],
    treatment: u8,
    outcome: f64,
    p0: f64,
    p1: f64,
}

/// Generates the synthetic population.
///
/// Covariates: X₁ ~ Beta(2, 18), X₂ ~ Gamma(shape 2, scale 5),
/// X₃ ~ Normal(0.05, 0.1²) truncated at zero. Outcome indices:
/// η₀ = 0.1 + ζ_g(0.5X₁ + 0.25X₁² + 0.3X₂ + 0.2X₂X₃),
/// η₁ = η₀·(1 + |ζ_g(0.75X₁ + 0.9X₂ + 1.2X₃)|); arms are balanced Bernoulli,
/// outcomes Bernoulli(expit(η_T)). Predictions are τ(X) + β_g + ε with
/// ε ~ Normal(0, ϱ_g·Var_g(Y)), and the stored baseline prediction is exactly
/// expit(η₀). Every row draws from its own seeded stream, so generation is
/// order-independent and reproducible.
pub fn generate_population(cfg: &SimConfig) -> Result<SimPopulation> {
    cfg.validate()?;
    let beta_x1 = Beta::new(2.0, 18.0).map_err(|e| Error::InvalidDistributionParams {
        msg: e.to_string(),
    })?;
    let gamma_x2 = Gamma::new(2.0, 5.0).map_err(|e| Error::InvalidDistributionParams {
        msg: e.to_string(),
    })?;
    let normal_x3 = Normal::new(0.05, 0.1).map_err(|e| Error::InvalidDistributionParams {
        msg: e.to_string(),
    })?;
    let mut cum = Vec::with_capacity(cfg.group_props.len());
    let mut acc = 0.0;
    for p in &cfg.group_props {
        acc += p;
        cum.push(acc);
    }

    let raw: Vec<RawRow> = (0..cfg.n_population)
        .into_par_iter()
        .map(|i| {
            let mut rng = stats::seeded_rng(stats::mix(cfg.seed, stats::mix(stats::CTX_ROW, i as u64)));
            let u: f64 = rng.random();
            let group = cum.iter().position(|&c| u < c).unwrap_or(cum.len() - 1);
            let x1: f64 = beta_x1.sample(&mut rng);
            let x2: f64 = gamma_x2.sample(&mut rng);
            let x3: f64 = loop {
                let v: f64 = normal_x3.sample(&mut rng);
                if v >= 0.0 {
                    break v;
                }
            };
            let zeta = cfg.zeta[group];
            let eta0 = 0.1 + zeta * (0.5 * x1 + 0.25 * x1 * x1 + 0.3 * x2 + 0.2 * x2 * x3);
            let eta1 = eta0 * (1.0 + (zeta * (0.75 * x1 + 0.9 * x2 + 1.2 * x3)).abs());
            let p0 = stats::expit(eta0);
            let p1 = stats::expit(eta1);
            let treatment = u8::from(rng.random_bool(0.5));
            let p_y = if treatment == 1 { p1 } else { p0 };
            let outcome = f64::from(rng.random_bool(p_y));
            RawRow {
                group,
                x: [x1, x2, x3],
                treatment,
                outcome,
                p0,
                p1,
            }
        })
        .collect();

    let g = cfg.group_props.len();
    let mut group_outcomes: Vec<Vec<f64>> = vec![Vec::new(); g];
    for row in &raw {
        group_outcomes[row.group].push(row.outcome);
    }
    for (gi, outs) in group_outcomes.iter().enumerate() {
        if outs.is_empty() {
            return Err(Error::InvalidDistributionParams {
                msg: format!("group g{} drew no rows; increase the population", gi + 1),
            });
        }
    }
    let var_y: Vec<f64> = group_outcomes
        .iter()
        .map(|o| stats::population_variance(o))
        .collect();

    let eps: Vec<f64> = (0..cfg.n_population)
        .into_par_iter()
        .map(|i| {
            let gi = raw[i].group;
            let sd = (cfg.rho[gi] * var_y[gi]).sqrt();
            if sd == 0.0 {
                0.0
            } else {
                let mut rng =
                    stats::seeded_rng(stats::mix(cfg.seed, stats::mix(stats::CTX_EPS, i as u64)));
                let n = Normal::new(0.0, sd).expect("positive sd");
                n.sample(&mut rng)
            }
        })
        .collect();

    let labels = cfg.group_labels();
    let mut rows = Vec::with_capacity(cfg.n_population);
    let mut tau = Vec::with_capacity(cfg.n_population);
    let mut aux: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for name in ["x_1", "x_2", "x_3"] {
        aux.insert(name.into(), Vec::with_capacity(cfg.n_population));
    }
    for (i, row) in raw.iter().enumerate() {
        let t = row.p1 / row.p0;
        tau.push(t);
        rows.push(ExperimentRow {
            unit_id: Some(format!("u{i}")),
            group: labels[row.group].clone(),
            treatment: row.treatment,
            outcome: row.outcome,
            cate_pred: t + cfg.beta[row.group] + eps[i],
            mu0_pred: Some(row.p0),
        });
        aux.get_mut("x_1").unwrap().push(row.x[0]);
        aux.get_mut("x_2").unwrap().push(row.x[1]);
        aux.get_mut("x_3").unwrap().push(row.x[2]);
    }

    // Per-group truth from population quantities.
    let mut truth = Vec::with_capacity(g);
    for gi in 0..g {
        let members: Vec<usize> = (0..raw.len()).filter(|&i| raw[i].group == gi).collect();
        let n = members.len();
        let mean_p0 = members.iter().map(|&i| raw[i].p0).sum::<f64>() / n as f64;
        let mean_p1 = members.iter().map(|&i| raw[i].p1).sum::<f64>() / n as f64;
        let true_gate = mean_p1 / mean_p0;
        // Collapse the realized predictions with the true weights p0/mean(p0).
        let collapsed = members
            .iter()
            .map(|&i| (raw[i].p0 / mean_p0) * rows[i].cate_pred)
            .sum::<f64>()
            / n as f64;
        truth.push(GroupTruth {
            group: labels[gi].clone(),
            true_gate,
            beta: cfg.beta[gi],
            realized_bias: collapsed - true_gate,
            outcome_variance: var_y[gi],
            n,
        });
    }

    let dataset = Dataset::new(rows, aux, EffectScale::Relative)?;
    Ok(SimPopulation {
        config: cfg.clone(),
        dataset,
        tau,
        truth,
    })
}

/// Draws a subsample stratified on the population's realized group shares
/// (largest-remainder apportionment), then four-way splits it with the
/// config's per-group estimation fractions.
///
/// Sampling is without replacement via a per-group partial shuffle; drawing
/// the full population returns a permutation of it.
pub fn draw_sample(
    pop: &SimPopulation,
    n: usize,
    seed: u64,
) -> Result<(Dataset, SplitAssignment)> {
    if n == 0 {
        return Err(Error::InvalidConfig {
            msg: "sample size must be positive".into(),
        });
    }
    if n > pop.dataset.n() {
        return Err(Error::SampleTooLarge {
            requested: n,
            available: pop.dataset.n(),
        });
    }
    let views = pop.dataset.group_views();
    let total = pop.dataset.n() as f64;
    let quotas: Vec<f64> = views
        .iter()
        .map(|v| n as f64 * v.n() as f64 / total)
        .collect();
    let caps: Vec<usize> = views.iter().map(|v| v.n()).collect();
    let alloc = stats::largest_remainder(&quotas, n, &caps);

    let mut chosen: Vec<usize> = Vec::with_capacity(n);
    for (view, &take) in views.iter().zip(&alloc) {
        let mut idx = view.indices.clone();
        let mut rng = stats::seeded_rng(stats::mix(
            stats::mix(seed, stats::CTX_DRAW),
            stats::label_hash(&view.group),
        ));
        // Partial Fisher-Yates: only the first `take` positions are needed.
        for j in 0..take.min(idx.len().saturating_sub(1)) {
            let k = rng.random_range(j..idx.len());
            idx.swap(j, k);
        }
        chosen.extend_from_slice(&idx[..take]);
    }
    chosen.sort_unstable();

    let rows: Vec<ExperimentRow> = chosen.iter().map(|&i| pop.dataset.rows[i].clone()).collect();
    let mut aux = BTreeMap::new();
    for (name, col) in &pop.dataset.aux {
        aux.insert(
            name.clone(),
            chosen.iter().map(|&i| col[i]).collect::<Vec<f64>>(),
        );
    }
    let mut ds = Dataset::new(rows, aux, pop.dataset.scale)?;
    ds.aux_names = pop.dataset.aux_names.clone();
    let split = four_way_split(&ds, &pop.config.fraction_spec(), stats::mix(seed, stats::CTX_SPLIT))?;
    Ok((ds, split))
}
