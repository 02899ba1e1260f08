//! Grid search scored on the uniform validation split only.
//!
//! A sweep file is an experiment config plus a `[grid]` table mapping
//! field names to candidate lists:
//!
//! ```toml
//! dataset = "synthetic"
//! seed = 1
//! out = "sweeps/a"
//!
//! [grid]
//! lambda_s = [1e-4, 1e-3]
//! student_dim = [10, 20]
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use toml::Value;

use crate::config::{load_config, resolve_field, ExperimentConfig};
use crate::records::{write_jsonl, EvalSplit};
use crate::run::run_seeds;
use crate::{write_atomic, RunnerError};

/// One grid cell: overrides in field-path order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub overrides: Vec<(String, String)>,
}

impl Cell {
    /// `field=value` pairs joined by commas; the lexicographic tie-break key.
    pub fn key(&self) -> String {
        self.overrides.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(",")
    }
}

/// Splits a sweep document into its base config text and its cells, in
/// odometer order over the sorted field paths.
pub fn parse_sweep(text: &str) -> Result<(String, Vec<Cell>), RunnerError> {
    let mut table: toml::Table = toml::from_str(text).map_err(|e| RunnerError::Config(e.to_string()))?;
    let grid = match table.remove("grid") {
        Some(Value::Table(g)) => g,
        Some(_) => return Err(RunnerError::Config("`grid` must be a table".into())),
        None => toml::Table::new(),
    };
    let mut axes: Vec<(String, Vec<String>)> = Vec::new();
    for (name, values) in grid {
        let path = resolve_field(&name)?;
        let values = match values {
            Value::Array(v) if !v.is_empty() => v.iter().map(render).collect(),
            _ => return Err(RunnerError::Config(format!("grid entry `{name}` must be a nonempty list"))),
        };
        axes.push((path, values));
    }
    axes.sort_by(|a, b| a.0.cmp(&b.0));
    let mut cells = vec![Cell { overrides: Vec::new() }];
    for (path, values) in &axes {
        cells = cells
            .into_iter()
            .flat_map(|c| {
                values.iter().map(move |v| {
                    let mut o = c.overrides.clone();
                    o.push((path.clone(), v.clone()));
                    Cell { overrides: o }
                })
            })
            .collect();
    }
    Ok((toml::to_string(&table).map_err(|e| RunnerError::Config(e.to_string()))?, cells))
}

fn render(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub index: usize,
    pub key: String,
    pub config_hash: String,
    /// Always `validation`: the audit trail that selection never saw test rows.
    pub evaluated_on: EvalSplit,
    pub n_seeds: usize,
    pub mean_val_auc: f64,
    pub mean_val_bce: f64,
}

/// Highest validation AUC; ties go to lower BCE, then the smaller key.
pub fn select_best(cells: &[CellSummary]) -> Result<&CellSummary, RunnerError> {
    if let Some(bad) = cells.iter().find(|c| c.evaluated_on != EvalSplit::Validation) {
        return Err(RunnerError::Config(format!("cell {} was scored on {:?}", bad.key, bad.evaluated_on)));
    }
    cells
        .iter()
        .min_by(|a, b| {
            b.mean_val_auc
                .total_cmp(&a.mean_val_auc)
                .then(a.mean_val_bce.total_cmp(&b.mean_val_bce))
                .then_with(|| a.key.cmp(&b.key))
        })
        .ok_or(RunnerError::Config("empty grid".into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub cells: Vec<CellSummary>,
    pub best_index: usize,
    pub best_key: String,
    pub best_config: ExperimentConfig,
}

/// Runs every cell over the config's seeds and selects a winner.
/// `overrides` apply to the base before the cell's own values.
pub fn sweep(text: &str, overrides: &[(String, String)]) -> Result<SweepOutcome, RunnerError> {
    let (base, cells) = parse_sweep(text)?;
    let mut configs = Vec::with_capacity(cells.len());
    for cell in &cells {
        let all: Vec<(String, String)> = overrides.iter().chain(&cell.overrides).cloned().collect();
        configs.push(load_config(Some(&base), &all)?);
    }
    let mut summaries = Vec::with_capacity(cells.len());
    for (index, (cell, cfg)) in cells.iter().zip(&configs).enumerate() {
        let results = run_seeds(cfg, EvalSplit::Validation)?;
        let finals: Vec<_> = results
            .iter()
            .flat_map(|r| r.records.iter().filter(|x| x.round.is_final()))
            .collect();
        let n = finals.len() as f64;
        summaries.push(CellSummary {
            index,
            key: cell.key(),
            config_hash: cfg.hash(),
            evaluated_on: EvalSplit::Validation,
            n_seeds: finals.len(),
            mean_val_auc: finals.iter().map(|r| r.auc).sum::<f64>() / n,
            mean_val_bce: finals.iter().map(|r| r.bce).sum::<f64>() / n,
        });
    }
    let best = select_best(&summaries)?.clone();
    Ok(SweepOutcome {
        best_index: best.index,
        best_key: best.key.clone(),
        best_config: configs[best.index].clone(),
        cells: summaries,
    })
}

/// Writes `sweep.jsonl`, `selection.json` and `best.toml` into `out`.
pub fn write_sweep(outcome: &SweepOutcome, out: &Path) -> Result<(), RunnerError> {
    fs::create_dir_all(out).map_err(|e| RunnerError::io(out, e))?;
    write_jsonl(&out.join("sweep.jsonl"), &outcome.cells)?;
    let selection = serde_json::json!({
        "best_index": outcome.best_index,
        "best_key": outcome.best_key,
        "criterion": "max mean validation AUC, then min validation BCE, then key order",
        "splits_read": ["validation"],
    });
    let mut bytes = serde_json::to_vec_pretty(&selection)?;
    bytes.push(b'\n');
    write_atomic(&out.join("selection.json"), &bytes)?;
    write_atomic(&out.join("best.toml"), outcome.best_config.to_toml().as_bytes())
}
