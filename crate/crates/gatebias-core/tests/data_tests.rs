mod common;

use std::collections::{BTreeMap, BTreeSet};

use gatebias_core::error::Error;
use gatebias_core::{
    four_way_split, load_dataset, quantile_grouping, write_dataset, ColumnMap, Dataset,
    EffectScale, FractionSpec, Half, SplitTag, Warning,
};
use proptest::prelude::*;

fn load(csv: &str, scale: EffectScale) -> gatebias_core::Result<Dataset> {
    load_dataset(csv.as_bytes(), &ColumnMap::default(), scale, None)
}

#[test]
fn loads_basic_dataset() {
    let csv = "group,treatment,outcome,cate_pred\n\
               b,1,1.0,0.2\n\
               a,0,0.0,0.1\n\
               a,1,1.0,0.15\n";
    let ds = load(csv, EffectScale::Additive).unwrap();
    assert_eq!(ds.n(), 3);
    assert_eq!(ds.groups, vec!["a".to_string(), "b".to_string()]);
    let a = ds.group_view("a").unwrap();
    assert_eq!(a.n(), 2);
    assert_eq!(a.n_treated, 1);
    assert_eq!(a.n_control, 1);
    let b = ds.group_view("b").unwrap();
    assert_eq!((b.n_treated, b.n_control), (1, 0));
    assert!(ds.warnings.is_empty());
}

#[test]
fn rejects_nonbinary_treatment() {
    let csv = "group,treatment,outcome,cate_pred\na,2,1.0,0.1\n";
    match load(csv, EffectScale::Additive) {
        Err(Error::NonBinaryTreatment { row, value }) => {
            assert_eq!(row, 1);
            assert_eq!(value, "2");
        }
        other => panic!("expected NonBinaryTreatment, got {other:?}"),
    }
    // Fractional treatments are rejected too.
    let csv = "group,treatment,outcome,cate_pred\na,0.5,1.0,0.1\n";
    assert!(matches!(
        load(csv, EffectScale::Additive),
        Err(Error::NonBinaryTreatment { .. })
    ));
    // Float-coded binary treatments are accepted.
    let csv = "group,treatment,outcome,cate_pred\na,1.0,1.0,0.1\na,0.0,0.0,0.1\n";
    let ds = load(csv, EffectScale::Additive).unwrap();
    assert_eq!(ds.rows[0].treatment, 1);
    assert_eq!(ds.rows[1].treatment, 0);
}

#[test]
fn rejects_nonbinary_outcome_on_relative_scale() {
    let csv = "group,treatment,outcome,cate_pred\na,1,0.5,1.1\n";
    match load(csv, EffectScale::Relative) {
        Err(Error::NegativeOutcomeOnRelativeScale { row, value }) => {
            assert_eq!(row, 1);
            assert_eq!(value, 0.5);
        }
        other => panic!("expected relative-scale outcome error, got {other:?}"),
    }
    // The same outcome is fine on the additive scale.
    assert!(load(csv, EffectScale::Additive).is_ok());
}

#[test]
fn rejects_unparseable_cells_with_location() {
    let csv = "group,treatment,outcome,cate_pred\na,1,1.0,abc\n";
    match load(csv, EffectScale::Additive) {
        Err(Error::UnparseableCell { row, column, value }) => {
            assert_eq!(row, 1);
            assert_eq!(column, "cate_pred");
            assert_eq!(value, "abc");
        }
        other => panic!("expected UnparseableCell, got {other:?}"),
    }
}

#[test]
fn missing_required_column_is_reported_by_name() {
    let csv = "group,treatment,outcome\na,1,1.0\n";
    match load(csv, EffectScale::Additive) {
        Err(Error::MissingColumn { name }) => assert_eq!(name, "cate_pred"),
        other => panic!("expected MissingColumn, got {other:?}"),
    }
}

#[test]
fn column_map_remaps_headers() {
    let csv = "country,arm,y,tau_hat\nus,1,1.0,0.3\nus,0,0.0,0.2\n";
    let map = ColumnMap::default()
        .with_overrides("group=country,treatment=arm,outcome=y,cate_pred=tau_hat")
        .unwrap();
    let ds = load_dataset(csv.as_bytes(), &map, EffectScale::Additive, None).unwrap();
    assert_eq!(ds.groups, vec!["us".to_string()]);
    assert_eq!(ds.rows[0].cate_pred, 0.3);
    assert!(ColumnMap::default().with_overrides("bogus=x").is_err());
}

#[test]
fn unknown_columns_become_numeric_aux() {
    let csv = "group,treatment,outcome,cate_pred,x_1,z_pre\na,1,1.0,0.2,0.5,7.25\na,0,0.0,0.1,0.25,6.5\n";
    let ds = load(csv, EffectScale::Additive).unwrap();
    assert_eq!(ds.aux_names, vec!["x_1".to_string(), "z_pre".to_string()]);
    assert_eq!(ds.aux["x_1"], vec![0.5, 0.25]);
    assert_eq!(ds.aux["z_pre"], vec![7.25, 6.5]);
    // Non-numeric aux cells are rejected.
    let csv = "group,treatment,outcome,cate_pred,note\na,1,1.0,0.2,hello\n";
    assert!(matches!(
        load(csv, EffectScale::Additive),
        Err(Error::UnparseableCell { column, .. }) if column == "note"
    ));
}

#[test]
fn mu0_and_unit_id_are_optional_per_row() {
    let csv = "group,treatment,outcome,cate_pred,mu0_pred,unit_id\n\
               a,1,1,1.2,0.4,u1\n\
               a,0,0,1.1,,\n";
    let ds = load(csv, EffectScale::Relative).unwrap();
    assert_eq!(ds.rows[0].mu0_pred, Some(0.4));
    assert_eq!(ds.rows[0].unit_id.as_deref(), Some("u1"));
    assert_eq!(ds.rows[1].mu0_pred, None);
    assert_eq!(ds.rows[1].unit_id, None);
    // Negative baselines are invalid.
    let csv = "group,treatment,outcome,cate_pred,mu0_pred\na,1,1,1.2,-0.1\n";
    assert!(matches!(
        load(csv, EffectScale::Relative),
        Err(Error::NonpositiveBaseline { .. })
    ));
}

#[test]
fn nonpositive_relative_predictions_warn_but_load() {
    let csv = "group,treatment,outcome,cate_pred\na,1,1,-0.5\na,0,0,1.1\n";
    let ds = load(csv, EffectScale::Relative).unwrap();
    assert_eq!(ds.warnings, vec![Warning::NonpositiveCatePred { rows: 1 }]);
}

#[test]
fn small_groups_flagged_only_when_configured() {
    let csv = "group,treatment,outcome,cate_pred\na,1,1.0,0.1\na,0,0.0,0.1\n";
    let ds = load_dataset(
        csv.as_bytes(),
        &ColumnMap::default(),
        EffectScale::Additive,
        None,
    )
    .unwrap();
    assert!(ds.warnings.is_empty());
    let ds = load_dataset(
        csv.as_bytes(),
        &ColumnMap::default(),
        EffectScale::Additive,
        Some(10),
    )
    .unwrap();
    assert_eq!(
        ds.warnings,
        vec![Warning::SmallGroup {
            group: "a".into(),
            n: 2,
            min: 10
        }]
    );
}

#[test]
fn write_then_load_is_lossless() {
    let csv = "group,treatment,outcome,cate_pred,mu0_pred,unit_id,x_1\n\
               a,1,1,1.25,0.1,u1,0.3333333333333333\n\
               a,0,0,1.1000000000000001,0.2,u2,1e-300\n\
               b,1,1,3.141592653589793,0.30000000000000004,u3,-7e15\n\
               b,0,1,-2.5e-10,0.4,u4,0\n";
    let ds = load(csv, EffectScale::Relative).unwrap();
    let mut buf = Vec::new();
    write_dataset(&ds, &mut buf).unwrap();
    let ds2 = load_dataset(
        buf.as_slice(),
        &ColumnMap::default(),
        EffectScale::Relative,
        None,
    )
    .unwrap();
    assert_eq!(ds.rows, ds2.rows);
    assert_eq!(ds.aux, ds2.aux);
    assert_eq!(ds.aux_names, ds2.aux_names);
}

fn score_dataset(scores: Vec<f64>) -> Dataset {
    let rows = scores
        .iter()
        .enumerate()
        .map(|(i, _)| common::row("all", (i % 2) as u8, 0.0, 0.1))
        .collect();
    common::dataset_aux(EffectScale::Additive, rows, vec![("score", scores)])
}

#[test]
fn quantile_grouping_even_split() {
    let ds = score_dataset((1..=10).map(f64::from).collect());
    let out = quantile_grouping(&ds, "score", 5).unwrap();
    assert_eq!(out.groups, vec!["q1", "q2", "q3", "q4", "q5"]);
    let sizes = out.group_sizes();
    assert!(sizes.values().all(|&n| n == 2));
    // Low scores land in low bins.
    assert_eq!(out.rows[0].group, "q1");
    assert_eq!(out.rows[9].group, "q5");
}

#[test]
fn quantile_grouping_ties_go_to_lower_bin() {
    let ds = score_dataset(vec![1.0, 1.0, 1.0, 2.0, 3.0, 4.0]);
    let out = quantile_grouping(&ds, "score", 2).unwrap();
    let sizes = out.group_sizes();
    assert_eq!(sizes["q1"], 3);
    assert_eq!(sizes["q2"], 3);
    for (i, row) in out.rows.iter().enumerate() {
        let expected = if ds.aux["score"][i] <= 1.0 { "q1" } else { "q2" };
        assert_eq!(row.group, expected, "row {i}");
    }
}

#[test]
fn quantile_grouping_rejects_degenerate_scores() {
    let ds = score_dataset(vec![2.0; 8]);
    match quantile_grouping(&ds, "score", 2) {
        Err(Error::DegenerateScore { distinct, k, .. }) => {
            assert_eq!(distinct, 1);
            assert_eq!(k, 2);
        }
        other => panic!("expected DegenerateScore, got {other:?}"),
    }
    assert!(quantile_grouping(&score_dataset(vec![1.0, 2.0]), "score", 1).is_err());
    assert!(matches!(
        quantile_grouping(&score_dataset(vec![1.0, 2.0]), "nope", 2),
        Err(Error::MissingColumn { .. })
    ));
}

#[test]
fn quantile_labels_are_zero_padded() {
    let ds = score_dataset((1..=20).map(f64::from).collect());
    let out = quantile_grouping(&ds, "score", 10).unwrap();
    assert_eq!(out.groups.first().unwrap(), "q01");
    assert_eq!(out.groups.last().unwrap(), "q10");
    assert!(out.groups.windows(2).all(|w| w[0] < w[1]));
}

fn balanced_dataset(n: usize) -> Dataset {
    let rows = (0..n)
        .map(|i| common::row("g", (i % 2) as u8, f64::from(i as u32 % 3), 0.1))
        .collect();
    common::dataset(EffectScale::Additive, rows)
}

fn tag_counts(ds: &Dataset, split: &gatebias_core::SplitAssignment) -> BTreeMap<SplitTag, usize> {
    let mut counts = BTreeMap::new();
    for t in &split.tags {
        *counts.entry(*t).or_insert(0) += 1;
    }
    let _ = ds;
    counts
}

#[test]
fn four_way_split_even_sizes() {
    let ds = balanced_dataset(100);
    let split = four_way_split(&ds, &FractionSpec::Uniform(0.5), 7).unwrap();
    let counts = tag_counts(&ds, &split);
    for tag in SplitTag::ALL {
        assert_eq!(counts[&tag], 25, "tag {tag:?}");
    }
}

#[test]
fn four_way_split_odd_sizes_differ_by_at_most_one() {
    let ds = balanced_dataset(101);
    let split = four_way_split(&ds, &FractionSpec::Uniform(0.5), 7).unwrap();
    let counts = tag_counts(&ds, &split);
    let max = counts.values().max().unwrap();
    let min = counts.values().min().unwrap();
    assert!(max - min <= 1, "counts {counts:?}");
}

#[test]
fn four_way_split_counts_do_not_depend_on_seed() {
    let ds = balanced_dataset(83);
    let a = four_way_split(&ds, &FractionSpec::Uniform(0.3), 1).unwrap();
    let b = four_way_split(&ds, &FractionSpec::Uniform(0.3), 2).unwrap();
    assert_eq!(tag_counts(&ds, &a), tag_counts(&ds, &b));
    assert_ne!(a.tags, b.tags);
    // Same seed reproduces the exact assignment.
    let c = four_way_split(&ds, &FractionSpec::Uniform(0.3), 1).unwrap();
    assert_eq!(a.tags, c.tags);
}

#[test]
fn four_way_split_rejects_tiny_groups_and_bad_fractions() {
    let ds = balanced_dataset(3);
    assert!(matches!(
        four_way_split(&ds, &FractionSpec::Uniform(0.5), 0),
        Err(Error::GroupTooSmall { min: 4, .. })
    ));
    let ds = balanced_dataset(8);
    for bad in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
        assert!(four_way_split(&ds, &FractionSpec::Uniform(bad), 0).is_err());
    }
    // Per-group fractions must cover every group.
    let spec = FractionSpec::PerGroup(BTreeMap::new());
    assert!(four_way_split(&ds, &spec, 0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn quantile_grouping_sizes_balanced_up_to_ties(
        scores in proptest::collection::vec(-50i32..50, 10..200),
        k in 2usize..8,
    ) {
        let scores: Vec<f64> = scores.into_iter().map(f64::from).collect();
        let distinct: BTreeSet<_> = scores.iter().map(|s| s.to_bits()).collect();
        prop_assume!(distinct.len() >= k);
        let ds = score_dataset(scores.clone());
        let out = quantile_grouping(&ds, "score", k).unwrap();
        prop_assert_eq!(out.groups.len(), k);
        // Bins ordered by score: every score in bin i is <= every score in bin i+1.
        let mut max_per_bin = vec![f64::NEG_INFINITY; k];
        let mut min_per_bin = vec![f64::INFINITY; k];
        for (i, row) in out.rows.iter().enumerate() {
            let b: usize = row.group[1..].parse::<usize>().unwrap() - 1;
            max_per_bin[b] = max_per_bin[b].max(scores[i]);
            min_per_bin[b] = min_per_bin[b].min(scores[i]);
        }
        for b in 1..k {
            prop_assert!(max_per_bin[b - 1] <= min_per_bin[b]);
        }
        // Size balance up to boundary ties: each bin within base ± (ties + 1).
        let n = scores.len();
        let sizes = out.group_sizes();
        let mut sorted = scores.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (label, &size) in &sizes {
            let b: usize = label[1..].parse::<usize>().unwrap() - 1;
            let base = n * (b + 1) / k - n * b / k;
            let lo = sorted[(n * b).div_ceil(k).min(n - 1)];
            let hi = sorted[(n * (b + 1)).div_ceil(k).min(n) - 1];
            let ties = scores.iter().filter(|&&s| s == lo || s == hi).count();
            prop_assert!(
                size <= base + ties + 1 && size + ties + 1 >= base,
                "bin {label} size {size} base {base} ties {ties}"
            );
        }
    }

    #[test]
    fn four_way_split_partitions_and_hits_targets(
        n_control in 2usize..40,
        n_treated in 2usize..40,
        frac in 0.1f64..0.9,
        seed in 0u64..1000,
    ) {
        let mut rows = Vec::new();
        for i in 0..n_control {
            rows.push(common::row("g", 0, f64::from(i as u32), 0.1));
        }
        for i in 0..n_treated {
            rows.push(common::row("g", 1, f64::from(i as u32), 0.1));
        }
        let ds = common::dataset(EffectScale::Additive, rows);
        let split = four_way_split(&ds, &FractionSpec::Uniform(frac), seed).unwrap();
        prop_assert_eq!(split.tags.len(), ds.n());

        // Detect half takes ceil(arm/2) of each arm.
        let view = ds.group_view("g").unwrap();
        let detect = view.restrict_half(&split, Half::Detect);
        prop_assert_eq!(detect.n_control, n_control.div_ceil(2));
        prop_assert_eq!(detect.n_treated, n_treated.div_ceil(2));

        // Each half's estimation subset hits round(frac * half_n) exactly.
        for half in [Half::Detect, Half::Mitigate] {
            let h = view.restrict_half(&split, half);
            let est = view.restrict(&split, half.estimate_tag());
            let pred = view.restrict(&split, half.predict_tag());
            prop_assert_eq!(est.n() + pred.n(), h.n());
            let target = (frac * h.n() as f64).round() as usize;
            prop_assert_eq!(est.n(), target.min(h.n()));
        }
    }
}
