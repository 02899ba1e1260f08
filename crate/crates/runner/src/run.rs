//! Seeded execution of one experiment config, its on-disk artifacts, and
//! replay from a manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use eng_core::data::SplitSpec;
use eng_core::netcore::{save_checkpoint, Network};
use eng_core::trainer::{run_conventional, run_sequential, ExperimentData, Method};
use eng_core::RngStream;
use rayon::prelude::*;

use crate::config::{ExperimentConfig, Schema};
use crate::dataset::DataSource;
use crate::records::{
    now_seconds, read_jsonl, write_jsonl, Aggregate, ErrorRecord, EvalSplit, MetricsRecord, Round, RunManifest, RunStatus,
    TimingRecord,
};
use crate::{write_atomic, RunnerError};

pub const MANIFEST: &str = "manifest.json";
pub const RECORDS: &str = "records.jsonl";
pub const TIMINGS: &str = "timings.jsonl";
pub const AGGREGATE: &str = "aggregate.json";

pub struct SeedResult {
    pub seed: u64,
    pub records: Vec<MetricsRecord>,
    pub timing: TimingRecord,
    pub student: Network,
    pub checksums: BTreeMap<String, String>,
}

pub fn run_id(config_hash: &str, seed: u64) -> String {
    format!("{}-s{seed}", &config_hash[..12])
}

/// Trains and evaluates one seed. With `EvalSplit::Validation` the test
/// split is never scored: validation rows stand in for it.
pub fn run_seed(
    cfg: &ExperimentConfig,
    source: &DataSource,
    seed: u64,
    eval: EvalSplit,
) -> Result<SeedResult, RunnerError> {
    let start = Instant::now();
    let loaded = source.for_seed(cfg, seed)?;
    let split = SplitSpec {
        uniform_train_fraction: cfg.uniform_train_fraction,
        seed,
    };
    let mut data = ExperimentData::from_dataset(&loaded.dataset, &split)?;
    if eval == EvalSplit::Validation {
        data.test = data.validation.clone();
    }
    let tcfg = cfg
        .train
        .materialize(loaded.dataset.n_users(), loaded.dataset.n_items(), cfg.method, seed);
    let rng = RngStream::new(seed).split("run");
    let hash = cfg.hash();
    let id = run_id(&hash, seed);
    let base = |round, m: eng_core::metrics::MetricsResult, val_auc, val_bce, n_sr, n_sb, n_discarded| MetricsRecord {
        run_id: id.clone(),
        config_hash: hash.clone(),
        seed,
        method: cfg.method,
        schema: cfg.schema,
        round,
        evaluated_on: eval,
        auc: m.auc,
        bce: m.bce,
        n_pos: m.n_pos,
        n_neg: m.n_neg,
        val_auc,
        val_bce,
        n_sr,
        n_sb,
        n_discarded,
    };

    let mut records = Vec::new();
    let student = match cfg.schema {
        Schema::Conventional => {
            let out = run_conventional(&data, &tcfg, cfg.method.method(), &rng)?;
            let n_sb = if cfg.method.method() == Method::Uniform { 0 } else { data.biased.len() };
            records.push(base(
                Round::FINAL,
                out.test,
                out.fit.val_auc,
                out.fit.val_bce,
                data.uniform_train.len(),
                n_sb,
                0,
            ));
            out.student
        }
        Schema::Sequential => {
            let out = run_sequential(&data, &tcfg, &cfg.sequential.to_core(), cfg.method.method(), &rng)?;
            for h in &out.state.history {
                records.push(base(Round::Index(h.round), h.test, h.val_auc, h.val_bce, h.n_sr, h.n_sb, h.n_discarded));
            }
            let last = out.state.history.last().expect("at least one round");
            records.push(base(
                Round::FINAL,
                last.test,
                last.val_auc,
                last.val_bce,
                last.n_sr,
                last.n_sb,
                last.n_discarded,
            ));
            out.student
        }
    };
    Ok(SeedResult {
        seed,
        timing: TimingRecord {
            run_id: id,
            seed,
            wall_clock_seconds: start.elapsed().as_secs_f64(),
        },
        records,
        student,
        checksums: loaded.checksums,
    })
}

/// Runs every seed in parallel; results come back in seed-list order.
pub fn run_seeds(cfg: &ExperimentConfig, eval: EvalSplit) -> Result<Vec<SeedResult>, RunnerError> {
    let source = DataSource::open(cfg)?;
    cfg.run_seeds()
        .par_iter()
        .map(|&seed| run_seed(cfg, &source, seed, eval))
        .collect()
}

#[derive(Debug)]
pub struct RunOutput {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    pub records: Vec<MetricsRecord>,
    pub aggregate: Option<Aggregate>,
}

/// Executes `cfg` into `cfg.out`: records, timings, aggregate, final
/// checkpoints and a manifest. A failure still leaves a manifest behind.
pub fn execute(cfg: &ExperimentConfig) -> Result<RunOutput, RunnerError> {
    let dir = cfg.out.clone();
    fs::create_dir_all(&dir).map_err(|e| RunnerError::io(&dir, e))?;
    let started_at = now_seconds();
    let mut manifest = RunManifest {
        status: RunStatus::Failed,
        config_hash: cfg.hash(),
        artifact_version: env!("CARGO_PKG_VERSION").to_string(),
        dataset_checksums: BTreeMap::new(),
        started_at,
        finished_at: started_at,
        seed: cfg.seed,
        seeds: cfg.run_seeds(),
        config: cfg.clone(),
        error: None,
    };
    let result = cfg.validate().and_then(|_| run_seeds(cfg, EvalSplit::Test)).and_then(|results| {
        let mut records = Vec::new();
        let mut timings = Vec::new();
        let ckpt_dir = dir.join("checkpoints");
        fs::create_dir_all(&ckpt_dir).map_err(|e| RunnerError::io(&ckpt_dir, e))?;
        for r in results {
            manifest.dataset_checksums.extend(r.checksums);
            records.extend(r.records);
            timings.push(r.timing);
            let path = ckpt_dir.join(format!("seed-{}.bin", r.seed));
            save_checkpoint(&r.student, &path)?;
        }
        write_jsonl(&dir.join(RECORDS), &records)?;
        write_jsonl(&dir.join(TIMINGS), &timings)?;
        let aggregate = Aggregate::from_records(&records);
        let mut agg = serde_json::to_vec_pretty(&aggregate)?;
        agg.push(b'\n');
        write_atomic(&dir.join(AGGREGATE), &agg)?;
        Ok((records, aggregate))
    });
    manifest.finished_at = now_seconds();
    match result {
        Ok((records, aggregate)) => {
            manifest.status = RunStatus::Ok;
            manifest.write(&dir.join(MANIFEST))?;
            Ok(RunOutput {
                dir,
                manifest,
                records,
                aggregate,
            })
        }
        Err(e) => {
            manifest.error = Some(ErrorRecord::from(&e));
            manifest.write(&dir.join(MANIFEST))?;
            Err(e)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayReport {
    pub records_compared: usize,
    pub mismatches: Vec<String>,
}

impl ReplayReport {
    pub fn is_exact(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Re-executes the run behind `manifest_path` into `out` and compares
/// every record bit for bit with the original `records.jsonl`.
pub fn replay(manifest_path: &Path, out: &Path) -> Result<ReplayReport, RunnerError> {
    let manifest = RunManifest::read(manifest_path)?;
    if manifest.status != RunStatus::Ok {
        return Err(RunnerError::Replay("manifest records a failed run".into()));
    }
    let original_dir = manifest_path.parent().unwrap_or(Path::new("."));
    let original: Vec<MetricsRecord> = read_jsonl(&original_dir.join(RECORDS))?;
    let mut cfg = manifest.config.clone();
    cfg.out = out.to_path_buf();
    if cfg.hash() != manifest.config_hash {
        return Err(RunnerError::Replay("config does not match its recorded hash".into()));
    }
    let rerun = execute(&cfg)?;
    let mut mismatches = Vec::new();
    for (k, v) in &manifest.dataset_checksums {
        if rerun.manifest.dataset_checksums.get(k) != Some(v) {
            mismatches.push(format!("dataset checksum for {k} changed"));
        }
    }
    if original.len() != rerun.records.len() {
        mismatches.push(format!("{} records originally, {} on replay", original.len(), rerun.records.len()));
    }
    for (a, b) in original.iter().zip(&rerun.records) {
        if let Some(d) = a.bit_diff(b) {
            mismatches.push(d);
        }
    }
    Ok(ReplayReport {
        records_compared: original.len().min(rerun.records.len()),
        mismatches,
    })
}
