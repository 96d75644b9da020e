//! Python bindings for `gatebias-core`.
//!
//! Datasets, splits, and correction plans are handle classes backed by the
//! Rust types; statistical results cross the boundary as plain dicts and
//! lists with the same field names the core structs serialize to, so the
//! Python surface matches the CLI's JSON reports.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyKeyError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use pyo3::IntoPyObjectExt;
use serde_json::Value as JsonValue;

use gatebias_core::{
    apply_debias, build_plan, calibration_points, detect_groups, disagreement_by_distance,
    disagreement_threshold_grid, draw_sample, empirical_disagreement_share, evaluate_end_to_end,
    fit_calibration, generate_population, implied_gamma, ipw_profit, load_dataset_path,
    profit_delta, quantile_grouping, topk_by_prediction, write_dataset, CalibrationFamily,
    ColumnMap, Dataset as CoreDataset, DebiasPlan as CorePlan, DetectionConfig, DetectionOutcome,
    EffectScale, Error as CoreError, EvalConfig, FractionSpec, GateEstimator, GroupView, Half,
    PolicyEconomics, PolicySpec, ShrinkageStrategy, SimConfig,
    SplitAssignment as CoreSplit, VarianceKind,
};

fn to_py_err(err: CoreError) -> PyErr {
    match err {
        CoreError::Io(e) => PyIOError::new_err(e.to_string()),
        CoreError::Csv(_) | CoreError::Json(_) | CoreError::BootstrapDegenerate { .. } => {
            PyRuntimeError::new_err(err.to_string())
        }
        other => PyValueError::new_err(other.to_string()),
    }
}

fn json_value_to_py(py: Python<'_>, v: &JsonValue) -> PyResult<Py<PyAny>> {
    match v {
        JsonValue::Null => Ok(py.None()),
        JsonValue::Bool(b) => b.into_py_any(py),
        JsonValue::Number(n) => {
            if let Some(i) = n.as_i64() {
                i.into_py_any(py)
            } else if let Some(u) = n.as_u64() {
                u.into_py_any(py)
            } else {
                n.as_f64().unwrap_or(f64::NAN).into_py_any(py)
            }
        }
        JsonValue::String(s) => s.into_py_any(py),
        JsonValue::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(json_value_to_py(py, item)?)?;
            }
            list.into_py_any(py)
        }
        JsonValue::Object(map) => {
            let dict = PyDict::new(py);
            for (k, val) in map {
                dict.set_item(k, json_value_to_py(py, val)?)?;
            }
            dict.into_py_any(py)
        }
    }
}

fn json_py(py: Python<'_>, value: serde_json::Result<JsonValue>) -> PyResult<Py<PyAny>> {
    let v = value.map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    json_value_to_py(py, &v)
}

fn parse_scale(s: &str) -> PyResult<EffectScale> {
    match s.trim().to_ascii_lowercase().as_str() {
        "additive" => Ok(EffectScale::Additive),
        "relative" => Ok(EffectScale::Relative),
        other => Err(PyValueError::new_err(format!(
            "unknown scale `{other}` (additive|relative)"
        ))),
    }
}

fn parse_half(s: &str) -> PyResult<Half> {
    match s.trim().to_ascii_lowercase().as_str() {
        "detect" => Ok(Half::Detect),
        "mitigate" => Ok(Half::Mitigate),
        other => Err(PyValueError::new_err(format!(
            "unknown half `{other}` (detect|mitigate)"
        ))),
    }
}

fn parse_variance(s: &str) -> PyResult<VarianceKind> {
    match s.trim().to_ascii_lowercase().as_str() {
        "as-printed" | "as_printed" => Ok(VarianceKind::AsPrinted),
        "sample" | "sample-plug-in" | "sample_plug_in" => Ok(VarianceKind::SamplePlugIn),
        other => Err(PyValueError::new_err(format!(
            "unknown variance kind `{other}` (as-printed|sample)"
        ))),
    }
}

fn column_map(overrides: Option<BTreeMap<String, String>>) -> PyResult<ColumnMap> {
    let mut map = ColumnMap::default();
    for (role, name) in overrides.unwrap_or_default() {
        match role.as_str() {
            "group" => map.group = name,
            "treatment" => map.treatment = name,
            "outcome" => map.outcome = name,
            "cate_pred" => map.cate_pred = name,
            "mu0_pred" => map.mu0_pred = name,
            "unit_id" => map.unit_id = name,
            "score" => map.score = name,
            other => {
                return Err(PyValueError::new_err(format!(
                    "unknown column role `{other}`"
                )))
            }
        }
    }
    Ok(map)
}

fn build_estimator(
    gate_method: &str,
    covariates: Option<Vec<String>>,
    control: Option<String>,
) -> PyResult<GateEstimator> {
    match gate_method.trim().to_ascii_lowercase().as_str() {
        "means" => Ok(GateEstimator::Means),
        "lin" => covariates
            .filter(|c| !c.is_empty())
            .map(|covariates| GateEstimator::Lin { covariates })
            .ok_or_else(|| PyValueError::new_err("gate method `lin` needs covariates")),
        "cuped" => control
            .map(|control| GateEstimator::Cuped { control })
            .ok_or_else(|| PyValueError::new_err("gate method `cuped` needs a control column")),
        "converted-only" | "converted_only" => Ok(GateEstimator::ConvertedOnly),
        other => Err(PyValueError::new_err(format!(
            "unknown gate method `{other}` (means|lin|cuped|converted-only)"
        ))),
    }
}

fn parse_strategies(names: &[String], me_alpha: f64) -> PyResult<Vec<ShrinkageStrategy>> {
    let mut out: Vec<ShrinkageStrategy> = Vec::new();
    for name in names {
        let strategy = match name.parse::<ShrinkageStrategy>().map_err(to_py_err)? {
            ShrinkageStrategy::MeanError { .. } => ShrinkageStrategy::MeanError { alpha: me_alpha },
            other => other,
        };
        if !out.contains(&strategy) {
            out.push(strategy);
        }
    }
    Ok(out)
}

fn resolve_split(
    ds: &CoreDataset,
    split: Option<&PySplit>,
    estimation_fraction: f64,
    seed: u64,
) -> PyResult<CoreSplit> {
    match split {
        Some(s) => Ok(s.inner.clone()),
        None => {
            gatebias_core::four_way_split(ds, &FractionSpec::Uniform(estimation_fraction), seed)
                .map_err(to_py_err)
        }
    }
}

fn run_detection(
    ds: &CoreDataset,
    split: &CoreSplit,
    half: Half,
    alpha: f64,
    n_boot: usize,
    seed: u64,
    n_tests: Option<usize>,
    estimator: &GateEstimator,
) -> PyResult<DetectionOutcome> {
    let views = ds.group_views();
    let cfg = DetectionConfig {
        alpha,
        n_boot,
        seed,
        n_tests,
    };
    detect_groups(&views, ds.scale, estimator, split, half, &cfg).map_err(to_py_err)
}

/// A validated experiment table: one row per unit with group label, treatment
/// arm, binary outcome, and a CATE prediction.
#[pyclass(frozen)]
struct Dataset {
    inner: CoreDataset,
}

#[pymethods]
impl Dataset {
    /// Loads a CSV. `columns` remaps roles to header names, e.g.
    /// `{"group": "country", "outcome": "converted"}`.
    #[staticmethod]
    #[pyo3(signature = (path, scale="relative", columns=None, min_group=None))]
    fn from_csv(
        path: PathBuf,
        scale: &str,
        columns: Option<BTreeMap<String, String>>,
        min_group: Option<usize>,
    ) -> PyResult<Self> {
        let scale = parse_scale(scale)?;
        let map = column_map(columns)?;
        let inner = load_dataset_path(&path, &map, scale, min_group).map_err(to_py_err)?;
        Ok(Dataset { inner })
    }

    /// Writes the dataset back out with canonical column names.
    fn to_csv(&self, path: PathBuf) -> PyResult<()> {
        let file = std::fs::File::create(&path).map_err(|e| to_py_err(CoreError::Io(e)))?;
        write_dataset(&self.inner, std::io::BufWriter::new(file)).map_err(to_py_err)
    }

    #[getter]
    fn groups(&self) -> Vec<String> {
        self.inner.groups.clone()
    }

    #[getter]
    fn scale(&self) -> &'static str {
        self.inner.scale.as_str()
    }

    #[getter]
    fn warnings(&self) -> Vec<String> {
        self.inner.warnings.iter().map(|w| w.to_string()).collect()
    }

    fn group_sizes(&self) -> BTreeMap<String, usize> {
        self.inner
            .group_views()
            .into_iter()
            .map(|v| (v.group.clone(), v.n()))
            .collect()
    }

    /// Rebins rows into `k` quantile groups of a numeric score column.
    fn with_quantile_groups(&self, score_column: &str, k: usize) -> PyResult<Self> {
        let inner = quantile_grouping(&self.inner, score_column, k).map_err(to_py_err)?;
        Ok(Dataset { inner })
    }

    fn __len__(&self) -> usize {
        self.inner.n()
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(n={}, groups={:?}, scale='{}')",
            self.inner.n(),
            self.inner.groups,
            self.inner.scale.as_str()
        )
    }
}

/// Row-level tags of a four-way split, reproducible from its seed.
#[pyclass(frozen, name = "SplitAssignment")]
struct PySplit {
    inner: CoreSplit,
}

#[pymethods]
impl PySplit {
    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    /// Rows per subset tag.
    fn counts(&self) -> BTreeMap<&'static str, usize> {
        let mut out = BTreeMap::new();
        for tag in &self.inner.tags {
            *out.entry(tag.as_str()).or_insert(0) += 1;
        }
        out
    }

    fn __len__(&self) -> usize {
        self.inner.tags.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "SplitAssignment(n={}, seed={})",
            self.inner.tags.len(),
            self.inner.seed
        )
    }
}

/// Per-group additive corrections produced by a shrinkage strategy.
#[pyclass(frozen, name = "DebiasPlan")]
struct PyPlan {
    inner: CorePlan,
}

impl PyPlan {
    fn entry(&self, group: &str) -> PyResult<&gatebias_core::GroupCorrection> {
        self.inner
            .groups
            .get(group)
            .ok_or_else(|| PyKeyError::new_err(group.to_string()))
    }
}

#[pymethods]
impl PyPlan {
    #[getter]
    fn strategy(&self) -> &'static str {
        self.inner.strategy.key()
    }

    #[getter]
    fn source_half(&self) -> &'static str {
        self.inner.source_half.as_str()
    }

    #[getter]
    fn groups(&self) -> Vec<String> {
        self.inner.groups.keys().cloned().collect()
    }

    fn gamma(&self, group: &str) -> PyResult<f64> {
        self.entry(group).map(|c| c.gamma)
    }

    fn correction(&self, group: &str) -> PyResult<f64> {
        self.entry(group).map(|c| c.correction)
    }

    fn as_dict(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        json_py(py, serde_json::to_value(&self.inner))
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.inner).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner: CorePlan =
            serde_json::from_str(text).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        Ok(PyPlan { inner })
    }

    fn __repr__(&self) -> String {
        format!(
            "DebiasPlan(strategy='{}', source_half='{}', groups={})",
            self.inner.strategy.key(),
            self.inner.source_half.as_str(),
            self.inner.groups.len()
        )
    }
}

/// Generates a synthetic experiment with known per-group bias and returns
/// `(dataset, split, info)`, where `info` carries the resolved design and the
/// population ground truth.
#[pyfunction]
#[pyo3(signature = (n_population=None, group_props=None, zeta=None, beta=None, rho=None,
                    estimation_fractions=None, seed=None, sample_size=None, draw_seed=None))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    py: Python<'_>,
    n_population: Option<usize>,
    group_props: Option<Vec<f64>>,
    zeta: Option<Vec<f64>>,
    beta: Option<Vec<f64>>,
    rho: Option<Vec<f64>>,
    estimation_fractions: Option<Vec<f64>>,
    seed: Option<u64>,
    sample_size: Option<usize>,
    draw_seed: Option<u64>,
) -> PyResult<(Dataset, PySplit, Py<PyAny>)> {
    let mut cfg = SimConfig::default();
    if let Some(v) = n_population {
        cfg.n_population = v;
    }
    if let Some(v) = group_props {
        cfg.group_props = v;
    }
    if let Some(v) = zeta {
        cfg.zeta = v;
    }
    if let Some(v) = beta {
        cfg.beta = v;
    }
    if let Some(v) = rho {
        cfg.rho = v;
    }
    if let Some(v) = estimation_fractions {
        cfg.estimation_fractions = v;
    }
    if let Some(v) = seed {
        cfg.seed = v;
    }
    if let Some(v) = sample_size {
        cfg.sample_size = v;
    }
    let pop = generate_population(&cfg).map_err(to_py_err)?;
    let draw = draw_seed.unwrap_or(cfg.seed);
    let (ds, split) = draw_sample(&pop, cfg.sample_size, draw).map_err(to_py_err)?;
    let info = serde_json::json!({
        "design": cfg,
        "draw_seed": draw,
        "population_n": pop.dataset.n(),
        "sample_n": ds.n(),
        "truth": pop.truth,
    });
    Ok((
        Dataset { inner: ds },
        PySplit { inner: split },
        json_value_to_py(py, &info)?,
    ))
}

/// Partitions every group into the four detection/mitigation subsets.
/// `per_group` maps group labels to estimation fractions and overrides the
/// uniform fraction.
#[pyfunction]
#[pyo3(signature = (dataset, estimation_fraction=0.5, seed=17, per_group=None))]
fn four_way_split(
    dataset: &Dataset,
    estimation_fraction: f64,
    seed: u64,
    per_group: Option<BTreeMap<String, f64>>,
) -> PyResult<PySplit> {
    let spec = match per_group {
        Some(map) => FractionSpec::PerGroup(map),
        None => FractionSpec::Uniform(estimation_fraction),
    };
    let inner = gatebias_core::four_way_split(&dataset.inner, &spec, seed).map_err(to_py_err)?;
    Ok(PySplit { inner })
}

/// Estimates per-group prediction bias on one half of the split and tests it
/// at the Bonferroni-adjusted level. Returns the detection report as a dict.
#[pyfunction]
#[pyo3(signature = (dataset, split=None, half="detect", alpha=0.05, n_boot=999, seed=17,
                    n_tests=None, estimation_fraction=0.5, gate_method="means",
                    covariates=None, control=None))]
#[allow(clippy::too_many_arguments)]
fn detect(
    py: Python<'_>,
    dataset: &Dataset,
    split: Option<&PySplit>,
    half: &str,
    alpha: f64,
    n_boot: usize,
    seed: u64,
    n_tests: Option<usize>,
    estimation_fraction: f64,
    gate_method: &str,
    covariates: Option<Vec<String>>,
    control: Option<String>,
) -> PyResult<Py<PyAny>> {
    let estimator = build_estimator(gate_method, covariates, control)?;
    let split = resolve_split(&dataset.inner, split, estimation_fraction, seed)?;
    let half = parse_half(half)?;
    let outcome = run_detection(
        &dataset.inner,
        &split,
        half,
        alpha,
        n_boot,
        seed,
        n_tests,
        &estimator,
    )?;
    json_py(py, serde_json::to_value(&outcome))
}

/// Runs detection and shrinks the estimated biases into a correction plan.
/// Returns `(plan, detection)`. A mean-error strategy tests at the
/// detection's adjusted level regardless of the alpha it was parsed with.
#[pyfunction]
#[pyo3(signature = (dataset, strategy="mse-", split=None, half="detect", alpha=0.05,
                    n_boot=999, seed=17, n_tests=None, estimation_fraction=0.5,
                    gate_method="means", covariates=None, control=None))]
#[allow(clippy::too_many_arguments)]
fn mitigate(
    py: Python<'_>,
    dataset: &Dataset,
    strategy: &str,
    split: Option<&PySplit>,
    half: &str,
    alpha: f64,
    n_boot: usize,
    seed: u64,
    n_tests: Option<usize>,
    estimation_fraction: f64,
    gate_method: &str,
    covariates: Option<Vec<String>>,
    control: Option<String>,
) -> PyResult<(PyPlan, Py<PyAny>)> {
    let estimator = build_estimator(gate_method, covariates, control)?;
    let split = resolve_split(&dataset.inner, split, estimation_fraction, seed)?;
    let half = parse_half(half)?;
    let detection = run_detection(
        &dataset.inner,
        &split,
        half,
        alpha,
        n_boot,
        seed,
        n_tests,
        &estimator,
    )?;
    let strategy = match strategy.parse::<ShrinkageStrategy>().map_err(to_py_err)? {
        ShrinkageStrategy::MeanError { .. } => ShrinkageStrategy::MeanError {
            alpha: detection.alpha_adjusted,
        },
        other => other,
    };
    let plan = build_plan(strategy, &detection.per_group, half).map_err(to_py_err)?;
    let detection = json_py(py, serde_json::to_value(&detection))?;
    Ok((PyPlan { inner: plan }, detection))
}

/// Returns a copy of the dataset with the plan's corrections subtracted from
/// each group's predictions.
#[pyfunction]
fn apply_plan(dataset: &Dataset, plan: &PyPlan) -> PyResult<Dataset> {
    let inner = apply_debias(&dataset.inner, &plan.inner).map_err(to_py_err)?;
    Ok(Dataset { inner })
}

/// Scores strategies out of sample across re-splits: plans are built on the
/// detection half and residual bias is measured on the mitigation half. The
/// no-debias baseline is always included. Returns the evaluation report.
#[pyfunction]
#[pyo3(signature = (dataset, strategies=None, alpha=0.05, n_boot=999, folds=10, seed=17,
                    estimation_fraction=0.5, bonferroni=true, gate_method="means",
                    covariates=None, control=None))]
#[allow(clippy::too_many_arguments)]
fn evaluate(
    py: Python<'_>,
    dataset: &Dataset,
    strategies: Option<Vec<String>>,
    alpha: f64,
    n_boot: usize,
    folds: usize,
    seed: u64,
    estimation_fraction: f64,
    bonferroni: bool,
    gate_method: &str,
    covariates: Option<Vec<String>>,
    control: Option<String>,
) -> PyResult<Py<PyAny>> {
    let names = strategies.unwrap_or_else(|| {
        vec!["naive".into(), "me".into(), "mse-".into(), "mse+".into()]
    });
    let strategies = parse_strategies(&names, alpha)?;
    if strategies.is_empty() {
        return Err(PyValueError::new_err("no strategies given"));
    }
    let estimator = build_estimator(gate_method, covariates, control)?;
    let cfg = EvalConfig {
        strategies,
        alpha,
        n_boot,
        folds,
        seed,
        estimation_fractions: FractionSpec::Uniform(estimation_fraction),
        estimator,
        bonferroni,
    };
    let outcome = evaluate_end_to_end(&dataset.inner, &cfg).map_err(to_py_err)?;
    json_py(py, serde_json::to_value(&outcome))
}

/// Fits calibration maps from model-implied to experimental group effects on
/// one half of the split. `weights` is `size` or `precision`; `families`
/// defaults to every family valid on the dataset's scale.
#[pyfunction]
#[pyo3(signature = (dataset, split=None, half="detect", families=None, weights="size",
                    alpha=0.05, n_boot=999, seed=17, estimation_fraction=0.5,
                    gate_method="means", covariates=None, control=None))]
#[allow(clippy::too_many_arguments)]
fn calibrate(
    py: Python<'_>,
    dataset: &Dataset,
    split: Option<&PySplit>,
    half: &str,
    families: Option<Vec<String>>,
    weights: &str,
    alpha: f64,
    n_boot: usize,
    seed: u64,
    estimation_fraction: f64,
    gate_method: &str,
    covariates: Option<Vec<String>>,
    control: Option<String>,
) -> PyResult<Py<PyAny>> {
    let ds = &dataset.inner;
    let estimator = build_estimator(gate_method, covariates, control)?;
    let split = resolve_split(ds, split, estimation_fraction, seed)?;
    let half = parse_half(half)?;
    let views = ds.group_views();
    let mut points =
        calibration_points(&views, ds.scale, &estimator, &split, half).map_err(to_py_err)?;
    match weights.trim().to_ascii_lowercase().as_str() {
        "size" => {}
        "precision" => {
            let detection = run_detection(ds, &split, half, alpha, n_boot, seed, None, &estimator)?;
            for (point, est) in points.iter_mut().zip(&detection.per_group) {
                if est.sigma_hat == 0.0 {
                    return Err(PyValueError::new_err(format!(
                        "group {} has a degenerate bootstrap SE; use size weights",
                        est.group
                    )));
                }
                point.weight = 1.0 / (est.sigma_hat * est.sigma_hat);
            }
        }
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown weight mode `{other}` (size|precision)"
            )))
        }
    }
    let families: Vec<CalibrationFamily> = match families {
        Some(names) => names
            .iter()
            .map(|n| n.parse().map_err(to_py_err))
            .collect::<PyResult<_>>()?,
        // Log families need positive effects, which the additive scale does
        // not guarantee.
        None if ds.scale == EffectScale::Additive => {
            vec![CalibrationFamily::Affine, CalibrationFamily::Isotonic]
        }
        None => CalibrationFamily::ALL.to_vec(),
    };
    let mut fitted = Vec::with_capacity(families.len());
    for family in families {
        let fit = fit_calibration(family, &points).map_err(to_py_err)?;
        let sse: f64 = points
            .iter()
            .map(|p| {
                let f = fit.fitted[&p.group];
                p.weight * (f - p.experimental) * (f - p.experimental)
            })
            .sum();
        let implied = implied_gamma(&fit, &points).map_err(to_py_err)?;
        fitted.push(serde_json::json!({ "fit": fit, "sse": sse, "implied": implied }));
    }
    json_value_to_py(
        py,
        &serde_json::json!({ "points": points, "families": fitted }),
    )
}

/// Prices a correction plan: profit delta, treated shares, and policy
/// disagreement between the base and debiased threshold policies, scored on
/// `half` (`detect`, `mitigate`, or `all`). Returns the targeting report.
#[pyfunction]
#[pyo3(signature = (dataset, plan, revenue, cost, split=None, half="mitigate", p=None,
                    variance="as-printed", seed=17, estimation_fraction=0.5,
                    distance_bins=None, cost_grid=None))]
#[allow(clippy::too_many_arguments)]
fn target(
    py: Python<'_>,
    dataset: &Dataset,
    plan: &PyPlan,
    revenue: f64,
    cost: f64,
    split: Option<&PySplit>,
    half: &str,
    p: Option<f64>,
    variance: &str,
    seed: u64,
    estimation_fraction: f64,
    distance_bins: Option<usize>,
    cost_grid: Option<Vec<f64>>,
) -> PyResult<Py<PyAny>> {
    let ds = &dataset.inner;
    let kind = parse_variance(variance)?;
    let economics = PolicyEconomics::new(revenue, cost).map_err(to_py_err)?;
    let base = PolicySpec::base(economics);
    let debiased = PolicySpec::debiased(economics, plan.inner.clone());
    let views = ds.group_views();
    let restricted;
    let eval_views: &[GroupView] = match half.trim().to_ascii_lowercase().as_str() {
        "all" => &views,
        other => {
            let h = parse_half(other)?;
            let split = resolve_split(ds, split, estimation_fraction, seed)?;
            restricted = views
                .iter()
                .map(|v| v.restrict_half(&split, h))
                .collect::<Vec<_>>();
            &restricted
        }
    };
    let profit = profit_delta(eval_views, &base, &debiased, p, kind).map_err(to_py_err)?;
    let disagreement =
        empirical_disagreement_share(eval_views, &base, &debiased).map_err(to_py_err)?;
    let mean_abs_correction = if plan.inner.groups.is_empty() {
        0.0
    } else {
        plan.inner
            .groups
            .values()
            .map(|c| c.correction.abs())
            .sum::<f64>()
            / plan.inner.groups.len() as f64
    };
    let mut per_group_treated = Vec::with_capacity(eval_views.len());
    let mut share_base = 0.0;
    let mut share_debiased = 0.0;
    let mut total = 0usize;
    for view in eval_views {
        let b = ipw_profit(view, &base, p, kind).map_err(to_py_err)?;
        let d = ipw_profit(view, &debiased, p, kind).map_err(to_py_err)?;
        share_base += b.treated_share * view.n() as f64;
        share_debiased += d.treated_share * view.n() as f64;
        total += view.n();
        per_group_treated.push(serde_json::json!({
            "group": view.group,
            "base": b.treated_share,
            "debiased": d.treated_share,
            "n": view.n(),
        }));
    }
    let (share_base, share_debiased) = if total == 0 {
        (0.0, 0.0)
    } else {
        (share_base / total as f64, share_debiased / total as f64)
    };
    let bins = match distance_bins {
        Some(k) => serde_json::to_value(
            disagreement_by_distance(eval_views, &base, &debiased, k).map_err(to_py_err)?,
        )
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?,
        None => JsonValue::Null,
    };
    let grid = match cost_grid {
        Some(costs) => serde_json::to_value(
            disagreement_threshold_grid(eval_views, revenue, &costs, &plan.inner)
                .map_err(to_py_err)?,
        )
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?,
        None => JsonValue::Null,
    };
    json_value_to_py(
        py,
        &serde_json::json!({
            "economics": { "revenue": revenue, "cost": cost, "threshold": economics.threshold },
            "strategy": plan.inner.strategy.key(),
            "mean_abs_correction": mean_abs_correction,
            "treated_share_base": share_base,
            "treated_share_debiased": share_debiased,
            "per_group_treated": per_group_treated,
            "disagreement": disagreement,
            "profit": profit,
            "distance_bins": bins,
            "cost_grid": grid,
        }),
    )
}

/// Break-even uplift threshold M = R / (R − C).
#[pyfunction]
fn profit_threshold(revenue: f64, cost: f64) -> PyResult<f64> {
    Ok(PolicyEconomics::new(revenue, cost)
        .map_err(to_py_err)?
        .threshold)
}

/// Closed-form probability that a correction of the given magnitude flips a
/// unit's treat/hold decision when predictions are normally distributed
/// around `tau_plus_b` with standard deviation `sigma`.
#[pyfunction]
fn disagreement_probability(
    tau_plus_b: f64,
    sigma: f64,
    correction: f64,
    threshold: f64,
) -> PyResult<f64> {
    gatebias_core::disagreement_probability(tau_plus_b, sigma, correction, threshold)
        .map_err(to_py_err)
}

/// Row indices a rank policy treats: the top `k` rows by prediction within
/// `group`, or across the whole dataset when `group` is omitted.
#[pyfunction]
#[pyo3(signature = (dataset, k, group=None))]
fn topk(dataset: &Dataset, k: usize, group: Option<&str>) -> PyResult<Vec<usize>> {
    let ds = &dataset.inner;
    match group {
        Some(g) => {
            let views = ds.group_views();
            let view = views
                .iter()
                .find(|v| v.group == g)
                .ok_or_else(|| PyKeyError::new_err(g.to_string()))?;
            Ok(topk_by_prediction(view, k))
        }
        None => {
            let all = GroupView::from_indices(ds, "all".into(), (0..ds.n()).collect());
            Ok(topk_by_prediction(&all, k))
        }
    }
}

/// Per-test level alpha / n_tests.
#[pyfunction]
fn bonferroni_adjust(alpha: f64, n_tests: usize) -> PyResult<f64> {
    gatebias_core::bonferroni_adjust(alpha, n_tests).map_err(to_py_err)
}

#[pymodule]
fn gatebias(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<Dataset>()?;
    m.add_class::<PySplit>()?;
    m.add_class::<PyPlan>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(four_way_split, m)?)?;
    m.add_function(wrap_pyfunction!(detect, m)?)?;
    m.add_function(wrap_pyfunction!(mitigate, m)?)?;
    m.add_function(wrap_pyfunction!(apply_plan, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate, m)?)?;
    m.add_function(wrap_pyfunction!(target, m)?)?;
    m.add_function(wrap_pyfunction!(profit_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(disagreement_probability, m)?)?;
    m.add_function(wrap_pyfunction!(topk, m)?)?;
    m.add_function(wrap_pyfunction!(bonferroni_adjust, m)?)?;
    Ok(())
}
