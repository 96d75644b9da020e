#![allow(dead_code)]

use std::collections::BTreeMap;

use gatebias_core::{
    Dataset, EffectScale, ExperimentRow, FractionSpec, SplitAssignment, SplitTag,
};

pub fn row(group: &str, treatment: u8, outcome: f64, cate_pred: f64) -> ExperimentRow {
    ExperimentRow {
        unit_id: None,
        group: group.to_string(),
        treatment,
        outcome,
        cate_pred,
        mu0_pred: None,
    }
}

pub fn row_mu0(
    group: &str,
    treatment: u8,
    outcome: f64,
    cate_pred: f64,
    mu0: f64,
) -> ExperimentRow {
    ExperimentRow {
        mu0_pred: Some(mu0),
        ..row(group, treatment, outcome, cate_pred)
    }
}

pub fn dataset(scale: EffectScale, rows: Vec<ExperimentRow>) -> Dataset {
    Dataset::new(rows, BTreeMap::new(), scale).expect("valid test dataset")
}

pub fn dataset_aux(
    scale: EffectScale,
    rows: Vec<ExperimentRow>,
    aux: Vec<(&str, Vec<f64>)>,
) -> Dataset {
    let aux: BTreeMap<String, Vec<f64>> = aux
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
    Dataset::new(rows, aux, scale).expect("valid test dataset")
}

/// Hand-built split assignment; tags aligned with dataset rows.
pub fn manual_split(tags: Vec<SplitTag>) -> SplitAssignment {
    SplitAssignment {
        seed: 0,
        estimation_fractions: FractionSpec::Uniform(0.5),
        tags,
    }
}

/// Tags from a compact string: D/d = detect estimate/predict,
/// M/m = mitigate estimate/predict.
pub fn tags(pattern: &str) -> Vec<SplitTag> {
    pattern
        .chars()
        .map(|c| match c {
            'D' => SplitTag::DetectEstimate,
            'd' => SplitTag::DetectPredict,
            'M' => SplitTag::MitigateEstimate,
            'm' => SplitTag::MitigatePredict,
            other => panic!("unknown tag char {other}"),
        })
        .collect()
}
