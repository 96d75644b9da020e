//! Report envelope and tidy-table emission. Output is deterministic: ordered
//! maps, fixed field order, shortest round-trip floats, no timestamps.

use std::fs::File;
use std::io::Write;

use serde::Serialize;

use gatebias_core::error::{Result, Warning};

use crate::config::RunConfig;

pub const SCHEMA: &str = "gatebias-report/v1";

/// Group label for dataset-level rows in the tidy table.
pub const ALL_GROUPS: &str = "(all)";
/// Strategy label for rows with no strategy dimension.
pub const NO_STRATEGY: &str = "-";

#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    schema: &'static str,
    config: &'a RunConfig,
    result: &'a T,
    warnings: &'a [Warning],
}

/// Plot-ready long-format table: one row per group x strategy x metric.
#[derive(Default)]
pub struct TidyTable {
    rows: Vec<TidyRow>,
}

#[derive(Serialize)]
struct TidyRow {
    group: String,
    strategy: String,
    metric: String,
    value: f64,
}

impl TidyTable {
    pub fn new() -> TidyTable {
        TidyTable::default()
    }

    pub fn push(&mut self, group: &str, strategy: &str, metric: &str, value: f64) {
        self.rows.push(TidyRow {
            group: group.into(),
            strategy: strategy.into(),
            metric: metric.into(),
            value,
        });
    }

    /// Absent metrics (undefined percent changes, single-group spreads) are
    /// omitted rather than written as sentinels.
    pub fn push_opt(&mut self, group: &str, strategy: &str, metric: &str, value: Option<f64>) {
        if let Some(v) = value {
            self.push(group, strategy, metric, v);
        }
    }

    pub fn push_bool(&mut self, group: &str, strategy: &str, metric: &str, value: bool) {
        self.push(group, strategy, metric, if value { 1.0 } else { 0.0 });
    }

    fn write_csv(&self, sink: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Writes the JSON report (file or stdout) and, when configured, the tidy
/// table CSV.
pub fn emit<T: Serialize>(
    config: &RunConfig,
    result: &T,
    warnings: &[Warning],
    table: &TidyTable,
) -> Result<()> {
    let report = Report {
        schema: SCHEMA,
        config,
        result,
        warnings,
    };
    let mut json = serde_json::to_string_pretty(&report)?;
    json.push('\n');
    match &config.report {
        Some(path) => std::fs::write(path, json)?,
        None => std::io::stdout().write_all(json.as_bytes())?,
    }
    if let Some(path) = &config.table {
        table.write_csv(File::create(path)?)?;
    }
    Ok(())
}
