//! Dataset loading for runs, content checksums, and `prepare`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use eng_core::data::{generate_synthetic, load_coat, load_yahoo, read_canonical, write_canonical, Dataset, Source};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{hex, DatasetKind, ExperimentConfig};
use crate::{write_atomic, RunnerError};

pub fn sha256_file(path: &Path) -> Result<String, RunnerError> {
    let bytes = fs::read(path).map_err(|e| RunnerError::io(path, e))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

pub fn canonical_bytes(dataset: &Dataset) -> Vec<u8> {
    let mut buf = Vec::new();
    write_canonical(dataset, &mut buf).expect("writing to memory cannot fail");
    buf
}

fn file_key(path: &Path) -> String {
    path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| path.display().to_string())
}

fn check_exists(paths: &[PathBuf]) -> Result<(), RunnerError> {
    for p in paths {
        if !p.is_file() {
            return Err(RunnerError::MissingData(p.clone()));
        }
    }
    Ok(())
}

/// Reads the native or canonical files named by `kind`.
pub fn load_files(kind: DatasetKind, paths: &[PathBuf]) -> Result<Dataset, RunnerError> {
    check_exists(paths)?;
    let ds = match (kind, paths) {
        (DatasetKind::Coat, [train, test]) => load_coat(train, test)?,
        (DatasetKind::Yahoo, [biased, uniform]) => load_yahoo(biased, uniform)?,
        (DatasetKind::Canonical, [tsv]) => {
            let f = fs::File::open(tsv).map_err(|e| RunnerError::io(tsv, e))?;
            read_canonical(f, &tsv.display().to_string())?
        }
        (kind, paths) => {
            return Err(RunnerError::Config(format!(
                "dataset {kind:?} cannot be read from {} path(s)",
                paths.len()
            )))
        }
    };
    Ok(ds)
}

/// A dataset with the checksums that identify it in a manifest.
#[derive(Debug, Clone)]
pub struct LoadedData {
    pub dataset: Dataset,
    pub checksums: BTreeMap<String, String>,
}

/// File-backed datasets are shared by all seeds; synthetic worlds may be
/// drawn per seed, so the source is resolved lazily.
pub enum DataSource {
    Fixed(LoadedData),
    Synthetic,
}

impl DataSource {
    pub fn open(cfg: &ExperimentConfig) -> Result<Self, RunnerError> {
        if cfg.dataset == DatasetKind::Synthetic {
            return Ok(DataSource::Synthetic);
        }
        let dataset = load_files(cfg.dataset, &cfg.data_paths)?;
        let mut checksums = BTreeMap::new();
        for p in &cfg.data_paths {
            checksums.insert(file_key(p), sha256_file(p)?);
        }
        Ok(DataSource::Fixed(LoadedData { dataset, checksums }))
    }

    pub fn for_seed(&self, cfg: &ExperimentConfig, seed: u64) -> Result<LoadedData, RunnerError> {
        match self {
            DataSource::Fixed(d) => Ok(d.clone()),
            DataSource::Synthetic => {
                let spec = cfg.synthetic.spec(seed);
                let (_, dataset) = generate_synthetic(&spec)?;
                let mut checksums = BTreeMap::new();
                checksums.insert(
                    format!("synthetic-world-{}", spec.seed),
                    hex(&Sha256::digest(canonical_bytes(&dataset))),
                );
                Ok(LoadedData { dataset, checksums })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub dataset: DatasetKind,
    pub n_users: usize,
    pub n_items: usize,
    pub n_uniform: usize,
    pub n_biased: usize,
    pub positive_ratio_uniform: Option<f64>,
    pub positive_ratio_biased: Option<f64>,
    pub tsv_sha256: String,
    pub inputs: BTreeMap<String, String>,
}

impl Sidecar {
    pub fn describe(kind: DatasetKind, dataset: &Dataset, tsv: &[u8], inputs: BTreeMap<String, String>) -> Self {
        Self {
            dataset: kind,
            n_users: dataset.n_users(),
            n_items: dataset.n_items(),
            n_uniform: dataset.count(Source::Uniform),
            n_biased: dataset.count(Source::Biased),
            positive_ratio_uniform: dataset.positive_ratio(Source::Uniform),
            positive_ratio_biased: dataset.positive_ratio(Source::Biased),
            tsv_sha256: hex(&Sha256::digest(tsv)),
            inputs,
        }
    }
}

pub fn kind_name(kind: DatasetKind) -> &'static str {
    match kind {
        DatasetKind::Coat => "coat",
        DatasetKind::Yahoo => "yahoo",
        DatasetKind::Synthetic => "synthetic",
        DatasetKind::Canonical => "canonical",
    }
}

/// Converts native files (or a synthetic world) to `<kind>.tsv` plus a
/// `<kind>.json` sidecar in `out`. Re-running yields identical bytes.
pub fn prepare(cfg: &ExperimentConfig, out: &Path) -> Result<Sidecar, RunnerError> {
    let loaded = DataSource::open(cfg)?.for_seed(cfg, cfg.seed)?;
    let tsv = canonical_bytes(&loaded.dataset);
    let sidecar = Sidecar::describe(cfg.dataset, &loaded.dataset, &tsv, loaded.checksums);
    fs::create_dir_all(out).map_err(|e| RunnerError::io(out, e))?;
    let name = kind_name(cfg.dataset);
    write_atomic(&out.join(format!("{name}.tsv")), &tsv)?;
    let mut json = serde_json::to_vec_pretty(&sidecar)?;
    json.push(b'\n');
    write_atomic(&out.join(format!("{name}.json")), &json)?;
    Ok(sidecar)
}
