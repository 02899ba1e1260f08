//! Persisted artifacts: metrics records, timings, aggregates, manifests.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, MethodName, Schema};
use crate::{write_atomic, RunnerError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinalTag {
    Final,
}

/// A round index, or `"final"` for the returned model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Round {
    Index(usize),
    Final(FinalTag),
}

impl Round {
    pub const FINAL: Round = Round::Final(FinalTag::Final);

    pub fn is_final(self) -> bool {
        self == Self::FINAL
    }
}

impl std::fmt::Display for Round {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Round::Index(i) => write!(f, "{i}"),
            Round::Final(_) => f.write_str("final"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalSplit {
    Test,
    Validation,
}

/// One evaluation event. Deterministic given config, data and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub run_id: String,
    pub config_hash: String,
    pub seed: u64,
    pub method: MethodName,
    pub schema: Schema,
    pub round: Round,
    /// Which uniform split `auc` and `bce` were computed on.
    pub evaluated_on: EvalSplit,
    pub auc: f64,
    pub bce: f64,
    pub n_pos: usize,
    pub n_neg: usize,
    pub val_auc: Option<f64>,
    pub val_bce: f64,
    pub n_sr: usize,
    pub n_sb: usize,
    pub n_discarded: usize,
}

impl MetricsRecord {
    /// Field-by-field comparison on bit patterns; `None` if identical.
    pub fn bit_diff(&self, other: &Self) -> Option<String> {
        let a = serde_json::to_value(self).expect("record serializes");
        let b = serde_json::to_value(other).expect("record serializes");
        if self == other
            && self.auc.to_bits() == other.auc.to_bits()
            && self.bce.to_bits() == other.bce.to_bits()
            && self.val_bce.to_bits() == other.val_bce.to_bits()
            && self.val_auc.map(f64::to_bits) == other.val_auc.map(f64::to_bits)
        {
            return None;
        }
        let (a, b) = (a.as_object().unwrap(), b.as_object().unwrap());
        let fields: Vec<String> = a.keys().filter(|k| a[*k] != b[*k]).cloned().collect();
        Some(format!(
            "run {} round {}: fields {:?} differ",
            self.run_id,
            self.round,
            if fields.is_empty() { vec!["float bits".to_string()] } else { fields }
        ))
    }
}

/// Wall-clock cost of one seed. Kept apart from the records so those
/// replay bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub run_id: String,
    pub seed: u64,
    pub wall_clock_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation; absent for a single seed.
    pub std: Option<f64>,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = (values.len() > 1).then(|| (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
        Some(Self { mean, std })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub method: MethodName,
    pub schema: Schema,
    pub evaluated_on: EvalSplit,
    pub n_seeds: usize,
    pub auc: Summary,
    pub bce: Summary,
}

impl Aggregate {
    /// Mean and spread of the final records.
    pub fn from_records(records: &[MetricsRecord]) -> Option<Self> {
        let finals: Vec<&MetricsRecord> = records.iter().filter(|r| r.round.is_final()).collect();
        let first = finals.first()?;
        let auc: Vec<f64> = finals.iter().map(|r| r.auc).collect();
        let bce: Vec<f64> = finals.iter().map(|r| r.bce).collect();
        Some(Self {
            method: first.method,
            schema: first.schema,
            evaluated_on: first.evaluated_on,
            n_seeds: finals.len(),
            auc: Summary::of(&auc)?,
            bce: Summary::of(&bce)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub kind: String,
    pub message: String,
}

impl From<&RunnerError> for ErrorRecord {
    fn from(e: &RunnerError) -> Self {
        Self {
            kind: e.kind().to_string(),
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub status: RunStatus,
    pub config_hash: String,
    pub artifact_version: String,
    pub dataset_checksums: BTreeMap<String, String>,
    /// Seconds since the Unix epoch.
    pub started_at: f64,
    pub finished_at: f64,
    pub seed: u64,
    pub seeds: Vec<u64>,
    pub config: ExperimentConfig,
    pub error: Option<ErrorRecord>,
}

impl RunManifest {
    pub fn read(path: &Path) -> Result<Self, RunnerError> {
        let text = fs::read_to_string(path).map_err(|e| RunnerError::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn write(&self, path: &Path) -> Result<(), RunnerError> {
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        write_atomic(path, &bytes)
    }
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), RunnerError> {
    let mut buf = Vec::new();
    for r in rows {
        serde_json::to_writer(&mut buf, r)?;
        buf.push(b'\n');
    }
    write_atomic(path, &buf)
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, RunnerError> {
    let f = fs::File::open(path).map_err(|e| RunnerError::io(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line.map_err(|e| RunnerError::io(path, e))?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

pub fn now_seconds() -> f64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}
