//! Dataset ingestion, validation, group views, quantile grouping, and the
//! four-way split used by every downstream stage.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::RngExt;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Warning};
use crate::stats;

/// Scale on which conditional effects are expressed.
///
/// Additive effects are differences E[Y(1)|X] − E[Y(0)|X]; relative effects are
/// ratios E[Y(1)|X] / E[Y(0)|X] over binary outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectScale {
    Additive,
    Relative,
}

impl EffectScale {
    pub fn as_str(self) -> &'static str {
        match self {
            EffectScale::Additive => "additive",
            EffectScale::Relative => "relative",
        }
    }
}

impl FromStr for EffectScale {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "additive" => Ok(EffectScale::Additive),
            "relative" | "ratio" => Ok(EffectScale::Relative),
            other => Err(Error::InvalidConfig {
                msg: format!("unknown scale `{other}`; expected additive|relative"),
            }),
        }
    }
}

impl std::fmt::Display for EffectScale {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One experimental observation with its precomputed CATE prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub unit_id: Option<String>,
    pub group: String,
    /// 0 = control, 1 = treated.
    pub treatment: u8,
    pub outcome: f64,
    /// Model prediction of the conditional effect on the dataset's scale.
    pub cate_pred: f64,
    /// Model prediction of the untreated mean E[Y(0)|X]; needed for
    /// relative-scale collapse weights.
    pub mu0_pred: Option<f64>,
}

/// Maps canonical column roles to the input file's header names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMap {
    pub group: String,
    pub treatment: String,
    pub outcome: String,
    pub cate_pred: String,
    pub mu0_pred: String,
    pub unit_id: String,
    pub score: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        ColumnMap {
            group: "group".into(),
            treatment: "treatment".into(),
            outcome: "outcome".into(),
            cate_pred: "cate_pred".into(),
            mu0_pred: "mu0_pred".into(),
            unit_id: "unit_id".into(),
            score: "score".into(),
        }
    }
}

impl ColumnMap {
    /// Applies `role=name` overrides, e.g. `group=country,outcome=converted`.
    pub fn with_overrides(mut self, spec: &str) -> Result<Self> {
        for part in spec.split(',').filter(|p| !p.trim().is_empty()) {
            let (role, name) = part.split_once('=').ok_or_else(|| Error::InvalidConfig {
                msg: format!("column override `{part}` is not of the form role=name"),
            })?;
            let name = name.trim().to_string();
            match role.trim() {
                "group" => self.group = name,
                "treatment" => self.treatment = name,
                "outcome" => self.outcome = name,
                "cate_pred" => self.cate_pred = name,
                "mu0_pred" => self.mu0_pred = name,
                "unit_id" => self.unit_id = name,
                "score" => self.score = name,
                other => {
                    return Err(Error::InvalidConfig {
                        msg: format!("unknown column role `{other}`"),
                    })
                }
            }
        }
        Ok(self)
    }
}

/// Validated, group-indexed dataset. Construction is the only place rows are
/// checked, so every consumer can rely on the invariants documented on
/// [`ExperimentRow`].
#[derive(Debug, Clone)]
pub struct Dataset {
    pub scale: EffectScale,
    pub rows: Vec<ExperimentRow>,
    /// Auxiliary numeric columns (covariates, scores, CUPED controls), keyed by
    /// their input header name; every column has one value per row.
    pub aux: BTreeMap<String, Vec<f64>>,
    /// Aux column order as seen in the input, for lossless round-trips.
    pub aux_names: Vec<String>,
    /// Sorted unique group labels.
    pub groups: Vec<String>,
    group_rows: BTreeMap<String, Vec<usize>>,
    pub warnings: Vec<Warning>,
}

impl Dataset {
    /// Builds a dataset from already-parsed rows, enforcing row invariants.
    pub fn new(
        rows: Vec<ExperimentRow>,
        aux: BTreeMap<String, Vec<f64>>,
        scale: EffectScale,
    ) -> Result<Dataset> {
        for (name, col) in &aux {
            if col.len() != rows.len() {
                return Err(Error::InvalidConfig {
                    msg: format!(
                        "aux column `{name}` has {} values for {} rows",
                        col.len(),
                        rows.len()
                    ),
                });
            }
        }
        let mut nonpositive_preds = 0usize;
        for (i, row) in rows.iter().enumerate() {
            let line = i + 1;
            if row.treatment > 1 {
                return Err(Error::NonBinaryTreatment {
                    row: line,
                    value: row.treatment.to_string(),
                });
            }
            if !row.outcome.is_finite() {
                return Err(Error::UnparseableCell {
                    row: line,
                    column: "outcome".into(),
                    value: row.outcome.to_string(),
                });
            }
            if scale == EffectScale::Relative && row.outcome != 0.0 && row.outcome != 1.0 {
                return Err(Error::NegativeOutcomeOnRelativeScale {
                    row: line,
                    value: row.outcome,
                });
            }
            if !row.cate_pred.is_finite() {
                return Err(Error::UnparseableCell {
                    row: line,
                    column: "cate_pred".into(),
                    value: row.cate_pred.to_string(),
                });
            }
            if scale == EffectScale::Relative && row.cate_pred <= 0.0 {
                nonpositive_preds += 1;
            }
            if let Some(m) = row.mu0_pred {
                if !m.is_finite() || m < 0.0 {
                    return Err(Error::NonpositiveBaseline {
                        detail: format!("row {line}: mu0_pred = {m}"),
                    });
                }
            }
        }
        let mut group_rows: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, row) in rows.iter().enumerate() {
            group_rows.entry(row.group.clone()).or_default().push(i);
        }
        let groups: Vec<String> = group_rows.keys().cloned().collect();
        let aux_names: Vec<String> = aux.keys().cloned().collect();
        let mut warnings = Vec::new();
        if nonpositive_preds > 0 {
            warnings.push(Warning::NonpositiveCatePred {
                rows: nonpositive_preds,
            });
        }
        Ok(Dataset {
            scale,
            rows,
            aux,
            aux_names,
            groups,
            group_rows,
            warnings,
        })
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    /// Flags groups smaller than `min`; returns the labels flagged.
    pub fn flag_small_groups(&mut self, min: usize) -> Vec<String> {
        let mut flagged = Vec::new();
        for (g, idx) in &self.group_rows {
            if idx.len() < min {
                self.warnings.push(Warning::SmallGroup {
                    group: g.clone(),
                    n: idx.len(),
                    min,
                });
                flagged.push(g.clone());
            }
        }
        flagged
    }

    pub fn group_view(&self, group: &str) -> Option<GroupView<'_>> {
        self.group_rows
            .get(group)
            .map(|idx| GroupView::from_indices(self, group.to_string(), idx.clone()))
    }

    /// One view per group, in sorted label order.
    pub fn group_views(&self) -> Vec<GroupView<'_>> {
        self.groups
            .iter()
            .map(|g| self.group_view(g).expect("indexed group"))
            .collect()
    }

    pub fn group_sizes(&self) -> BTreeMap<String, usize> {
        self.group_rows
            .iter()
            .map(|(g, idx)| (g.clone(), idx.len()))
            .collect()
    }
}

/// Half of the four-way split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Half {
    Detect,
    Mitigate,
}

impl Half {
    pub fn as_str(self) -> &'static str {
        match self {
            Half::Detect => "detect",
            Half::Mitigate => "mitigate",
        }
    }

    pub fn predict_tag(self) -> SplitTag {
        match self {
            Half::Detect => SplitTag::DetectPredict,
            Half::Mitigate => SplitTag::MitigatePredict,
        }
    }

    pub fn estimate_tag(self) -> SplitTag {
        match self {
            Half::Detect => SplitTag::DetectEstimate,
            Half::Mitigate => SplitTag::MitigateEstimate,
        }
    }
}

/// Row tag in the four-way split: two disjoint halves, each split again into a
/// prediction-collapse subset and an experimental-estimation subset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitTag {
    DetectPredict,
    DetectEstimate,
    MitigatePredict,
    MitigateEstimate,
}

impl SplitTag {
    pub fn half(self) -> Half {
        match self {
            SplitTag::DetectPredict | SplitTag::DetectEstimate => Half::Detect,
            SplitTag::MitigatePredict | SplitTag::MitigateEstimate => Half::Mitigate,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SplitTag::DetectPredict => "detect_predict",
            SplitTag::DetectEstimate => "detect_estimate",
            SplitTag::MitigatePredict => "mitigate_predict",
            SplitTag::MitigateEstimate => "mitigate_estimate",
        }
    }

    pub const ALL: [SplitTag; 4] = [
        SplitTag::DetectPredict,
        SplitTag::DetectEstimate,
        SplitTag::MitigatePredict,
        SplitTag::MitigateEstimate,
    ];
}

/// Estimation-subset fraction, uniform or per group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FractionSpec {
    Uniform(f64),
    PerGroup(BTreeMap<String, f64>),
}

impl FractionSpec {
    pub fn validate(&self) -> Result<()> {
        let check = |f: f64| -> Result<()> {
            if f.is_finite() && f > 0.0 && f < 1.0 {
                Ok(())
            } else {
                Err(Error::InvalidConfig {
                    msg: format!("estimation fraction {f} must lie strictly inside (0, 1)"),
                })
            }
        };
        match self {
            FractionSpec::Uniform(f) => check(*f),
            FractionSpec::PerGroup(m) => m.values().try_for_each(|f| check(*f)),
        }
    }

    pub fn for_group(&self, group: &str) -> Result<f64> {
        match self {
            FractionSpec::Uniform(f) => Ok(*f),
            FractionSpec::PerGroup(m) => m.get(group).copied().ok_or_else(|| Error::InvalidConfig {
                msg: format!("no estimation fraction configured for group `{group}`"),
            }),
        }
    }
}

/// Row-level tags of a four-way split, reproducible from `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub seed: u64,
    pub estimation_fractions: FractionSpec,
    pub tags: Vec<SplitTag>,
}

impl SplitAssignment {
    pub fn tag(&self, row: usize) -> SplitTag {
        self.tags[row]
    }

    /// Tag counts per group, for reporting.
    pub fn counts(&self, ds: &Dataset) -> BTreeMap<String, BTreeMap<&'static str, usize>> {
        let mut out: BTreeMap<String, BTreeMap<&'static str, usize>> = BTreeMap::new();
        for (i, row) in ds.rows.iter().enumerate() {
            *out.entry(row.group.clone())
                .or_default()
                .entry(self.tags[i].as_str())
                .or_insert(0) += 1;
        }
        out
    }
}

/// Read-only view of one group's rows, optionally restricted to a split
/// subset. `indices` may contain repeats when the view is a bootstrap
/// resample.
#[derive(Debug, Clone)]
pub struct GroupView<'a> {
    pub group: String,
    dataset: &'a Dataset,
    pub indices: Vec<usize>,
    pub n_treated: usize,
    pub n_control: usize,
}

impl<'a> GroupView<'a> {
    pub fn from_indices(dataset: &'a Dataset, group: String, indices: Vec<usize>) -> GroupView<'a> {
        let n_treated = indices
            .iter()
            .filter(|&&i| dataset.rows[i].treatment == 1)
            .count();
        let n_control = indices.len() - n_treated;
        GroupView {
            group,
            dataset,
            indices,
            n_treated,
            n_control,
        }
    }

    pub fn dataset(&self) -> &'a Dataset {
        self.dataset
    }

    pub fn n(&self) -> usize {
        self.indices.len()
    }

    pub fn rows(&self) -> impl Iterator<Item = &'a ExperimentRow> + '_ {
        self.indices.iter().map(move |&i| &self.dataset.rows[i])
    }

    /// Values of an aux column gathered over this view's rows.
    pub fn aux(&self, column: &str) -> Result<Vec<f64>> {
        let col = self
            .dataset
            .aux
            .get(column)
            .ok_or_else(|| Error::MissingColumn {
                name: column.to_string(),
            })?;
        Ok(self.indices.iter().map(|&i| col[i]).collect())
    }

    /// Sub-view holding only rows with the given split tag.
    pub fn restrict(&self, split: &SplitAssignment, tag: SplitTag) -> GroupView<'a> {
        let indices: Vec<usize> = self
            .indices
            .iter()
            .copied()
            .filter(|&i| split.tags[i] == tag)
            .collect();
        GroupView::from_indices(self.dataset, self.group.clone(), indices)
    }

    /// Sub-view holding both subsets of one half.
    pub fn restrict_half(&self, split: &SplitAssignment, half: Half) -> GroupView<'a> {
        let indices: Vec<usize> = self
            .indices
            .iter()
            .copied()
            .filter(|&i| split.tags[i].half() == half)
            .collect();
        GroupView::from_indices(self.dataset, self.group.clone(), indices)
    }

    pub fn outcomes_by_arm(&self) -> (Vec<f64>, Vec<f64>) {
        let mut control = Vec::with_capacity(self.n_control);
        let mut treated = Vec::with_capacity(self.n_treated);
        for row in self.rows() {
            if row.treatment == 1 {
                treated.push(row.outcome);
            } else {
                control.push(row.outcome);
            }
        }
        (control, treated)
    }
}

fn parse_f64(raw: &str, row: usize, column: &str) -> Result<f64> {
    let v: f64 = raw.trim().parse().map_err(|_| Error::UnparseableCell {
        row,
        column: column.to_string(),
        value: raw.to_string(),
    })?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::UnparseableCell {
            row,
            column: column.to_string(),
            value: raw.to_string(),
        })
    }
}

/// Loads a CSV into a validated dataset.
///
/// Required columns: group, treatment, outcome, cate_pred (under the names in
/// `columns`). Optional: mu0_pred, unit_id. Any other column is kept as a
/// numeric aux column. `min_group_size` turns on small-group flagging.
pub fn load_dataset(
    source: impl Read,
    columns: &ColumnMap,
    scale: EffectScale,
    min_group_size: Option<usize>,
) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(source);
    let headers: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let require = |name: &str| {
        find(name).ok_or_else(|| Error::MissingColumn {
            name: name.to_string(),
        })
    };
    let group_i = require(&columns.group)?;
    let treatment_i = require(&columns.treatment)?;
    let outcome_i = require(&columns.outcome)?;
    let cate_i = require(&columns.cate_pred)?;
    let mu0_i = find(&columns.mu0_pred);
    let unit_i = find(&columns.unit_id);

    let special = [group_i, treatment_i, outcome_i, cate_i]
        .into_iter()
        .chain(mu0_i)
        .chain(unit_i)
        .collect::<Vec<_>>();
    let aux_cols: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| !special.contains(i))
        .map(|(i, h)| (i, h.clone()))
        .collect();

    let mut rows = Vec::new();
    let mut aux: BTreeMap<String, Vec<f64>> = aux_cols
        .iter()
        .map(|(_, h)| (h.clone(), Vec::new()))
        .collect();
    for (rec_idx, record) in reader.records().enumerate() {
        let record = record?;
        let line = rec_idx + 1;
        let raw_t = record.get(treatment_i).unwrap_or("");
        let t_val: f64 = raw_t.trim().parse().map_err(|_| Error::NonBinaryTreatment {
            row: line,
            value: raw_t.to_string(),
        })?;
        let treatment = if t_val == 0.0 {
            0u8
        } else if t_val == 1.0 {
            1u8
        } else {
            return Err(Error::NonBinaryTreatment {
                row: line,
                value: raw_t.to_string(),
            });
        };
        let outcome = parse_f64(record.get(outcome_i).unwrap_or(""), line, &columns.outcome)?;
        let cate_pred = parse_f64(record.get(cate_i).unwrap_or(""), line, &columns.cate_pred)?;
        let mu0_pred = match mu0_i {
            None => None,
            Some(i) => {
                let raw = record.get(i).unwrap_or("").trim();
                if raw.is_empty() {
                    None
                } else {
                    Some(parse_f64(raw, line, &columns.mu0_pred)?)
                }
            }
        };
        let unit_id = unit_i.and_then(|i| {
            let raw = record.get(i).unwrap_or("").trim();
            if raw.is_empty() {
                None
            } else {
                Some(raw.to_string())
            }
        });
        let group = record.get(group_i).unwrap_or("").trim().to_string();
        if group.is_empty() {
            return Err(Error::UnparseableCell {
                row: line,
                column: columns.group.clone(),
                value: String::new(),
            });
        }
        for (i, h) in &aux_cols {
            let v = parse_f64(record.get(*i).unwrap_or(""), line, h)?;
            aux.get_mut(h).expect("aux column").push(v);
        }
        rows.push(ExperimentRow {
            unit_id,
            group,
            treatment,
            outcome,
            cate_pred,
            mu0_pred,
        });
    }

    let mut ds = Dataset::new(rows, aux, scale)?;
    // Preserve input column order for round-trips.
    ds.aux_names = aux_cols.into_iter().map(|(_, h)| h).collect();
    if let Some(min) = min_group_size {
        ds.flag_small_groups(min);
    }
    Ok(ds)
}

pub fn load_dataset_path(
    path: impl AsRef<Path>,
    columns: &ColumnMap,
    scale: EffectScale,
    min_group_size: Option<usize>,
) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    load_dataset(std::io::BufReader::new(file), columns, scale, min_group_size)
}

/// Writes a dataset back to CSV with canonical column names. Floats use the
/// shortest representation that round-trips, so load ∘ write is lossless.
pub fn write_dataset(ds: &Dataset, sink: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    let has_unit = ds.rows.iter().any(|r| r.unit_id.is_some());
    let has_mu0 = ds.rows.iter().any(|r| r.mu0_pred.is_some());
    let mut header: Vec<&str> = Vec::new();
    if has_unit {
        header.push("unit_id");
    }
    header.extend(["group", "treatment", "outcome", "cate_pred"]);
    if has_mu0 {
        header.push("mu0_pred");
    }
    for name in &ds.aux_names {
        header.push(name);
    }
    w.write_record(&header)?;
    for (i, row) in ds.rows.iter().enumerate() {
        let mut rec: Vec<String> = Vec::with_capacity(header.len());
        if has_unit {
            rec.push(row.unit_id.clone().unwrap_or_default());
        }
        rec.push(row.group.clone());
        rec.push(row.treatment.to_string());
        rec.push(format!("{}", row.outcome));
        rec.push(format!("{}", row.cate_pred));
        if has_mu0 {
            rec.push(row.mu0_pred.map(|m| format!("{m}")).unwrap_or_default());
        }
        for name in &ds.aux_names {
            rec.push(format!("{}", ds.aux[name][i]));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Replaces group labels with quantile bins of a numeric score column.
///
/// Bin edges are type-1 (lower) empirical quantiles of the score; values tied
/// with an edge fall in the lower bin. Labels are `q1`..`qk`, zero-padded so
/// they sort lexicographically.
pub fn quantile_grouping(ds: &Dataset, score_column: &str, k: usize) -> Result<Dataset> {
    if k < 2 {
        return Err(Error::InvalidConfig {
            msg: format!("quantile grouping needs k >= 2, got {k}"),
        });
    }
    let scores = ds
        .aux
        .get(score_column)
        .ok_or_else(|| Error::MissingColumn {
            name: score_column.to_string(),
        })?;
    let n = scores.len();
    if n == 0 {
        return Err(Error::InvalidConfig {
            msg: "cannot quantile-group an empty dataset".into(),
        });
    }
    let mut sorted = scores.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut distinct = 1usize;
    for w in sorted.windows(2) {
        if w[0] != w[1] {
            distinct += 1;
        }
    }
    if distinct < k {
        return Err(Error::DegenerateScore {
            column: score_column.to_string(),
            distinct,
            k,
        });
    }
    // Interior edges at type-1 quantiles i/k: sorted[ceil(n*i/k) - 1].
    let edges: Vec<f64> = (1..k)
        .map(|i| sorted[(n * i).div_ceil(k) - 1])
        .collect();
    let width = k.to_string().len();
    let labels: Vec<String> = (1..=k).map(|i| format!("q{i:0width$}")).collect();
    let mut rows = ds.rows.clone();
    for (i, row) in rows.iter_mut().enumerate() {
        let x = scores[i];
        let bin = edges.iter().filter(|&&e| x > e).count();
        row.group = labels[bin].clone();
    }
    let mut out = Dataset::new(rows, ds.aux.clone(), ds.scale)?;
    out.aux_names = ds.aux_names.clone();
    out.warnings = ds.warnings.clone();
    Ok(out)
}

/// Splits every group into Detect/Mitigate halves and each half into
/// Estimate/Predict subsets.
///
/// Arms are split separately so treatment shares are preserved: within each
/// (group, arm) the rows are shuffled once, the first ⌈n/2⌉ go to the Detect
/// half, and within each half the estimation target round(frac · half_n) is
/// allocated across arms by largest remainder. Subset sizes therefore do not
/// depend on the seed.
pub fn four_way_split(
    ds: &Dataset,
    fractions: &FractionSpec,
    seed: u64,
) -> Result<SplitAssignment> {
    fractions.validate()?;
    let mut tags: Vec<Option<SplitTag>> = vec![None; ds.n()];
    for view in ds.group_views() {
        let frac = fractions.for_group(&view.group)?;
        if view.n() < 4 {
            return Err(Error::GroupTooSmall {
                group: view.group.clone(),
                n: view.n(),
                min: 4,
            });
        }
        // Shuffle each arm once; reuse the order for both the half cut and the
        // subset cut.
        let mut arm_rows: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
        for &i in &view.indices {
            arm_rows[ds.rows[i].treatment as usize].push(i);
        }
        for (arm, rows_in_arm) in arm_rows.iter_mut().enumerate() {
            let s = stats::mix(
                stats::mix(stats::mix(seed, stats::CTX_SPLIT), stats::label_hash(&view.group)),
                arm as u64,
            );
            let mut rng = stats::seeded_rng(s);
            // Fisher-Yates.
            for j in (1..rows_in_arm.len()).rev() {
                let k = rng.random_range(0..=j);
                rows_in_arm.swap(j, k);
            }
        }
        let halves: [[&[usize]; 2]; 2] = {
            let d0 = arm_rows[0].len().div_ceil(2);
            let d1 = arm_rows[1].len().div_ceil(2);
            [
                [&arm_rows[0][..d0], &arm_rows[1][..d1]],
                [&arm_rows[0][d0..], &arm_rows[1][d1..]],
            ]
        };
        for (h, half_arms) in halves.iter().enumerate() {
            let half = if h == 0 { Half::Detect } else { Half::Mitigate };
            let half_n = half_arms[0].len() + half_arms[1].len();
            let target = (frac * half_n as f64).round() as usize;
            let quotas = [
                frac * half_arms[0].len() as f64,
                frac * half_arms[1].len() as f64,
            ];
            let caps = [half_arms[0].len(), half_arms[1].len()];
            let alloc = stats::largest_remainder(&quotas, target.min(half_n), &caps);
            for (arm, rows_in_half) in half_arms.iter().enumerate() {
                for (pos, &i) in rows_in_half.iter().enumerate() {
                    let tag = if pos < alloc[arm] {
                        half.estimate_tag()
                    } else {
                        half.predict_tag()
                    };
                    tags[i] = Some(tag);
                }
            }
        }
    }
    Ok(SplitAssignment {
        seed,
        estimation_fractions: fractions.clone(),
        tags: tags.into_iter().map(|t| t.expect("every row tagged")).collect(),
    })
}
