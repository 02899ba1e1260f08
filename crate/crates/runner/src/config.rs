//! Experiment configuration: a TOML file whose every field can be
//! overridden by a `--<field> <value>` flag.

use std::path::PathBuf;

use eng_core::data::SyntheticSpec;
use eng_core::losses::RegLossKind;
use eng_core::netcore::{InitRule, NetworkConfig, OptimizerKind};
use eng_core::trainer::{Method, SequentialConfig, TrainConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::Value;

use crate::RunnerError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Schema {
    Conventional,
    Sequential,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodName {
    EngMae,
    EngMse,
    EngKl,
    EngJeffreys,
    Union,
    Uniform,
}

impl MethodName {
    pub const ALL: [MethodName; 6] = [
        MethodName::EngMae,
        MethodName::EngMse,
        MethodName::EngKl,
        MethodName::EngJeffreys,
        MethodName::Union,
        MethodName::Uniform,
    ];

    pub fn method(self) -> Method {
        match self {
            MethodName::EngMae => Method::Eng(RegLossKind::Mae),
            MethodName::EngMse => Method::Eng(RegLossKind::Mse),
            MethodName::EngKl => Method::Eng(RegLossKind::Kl),
            MethodName::EngJeffreys => Method::Eng(RegLossKind::Jeffreys),
            MethodName::Union => Method::Union,
            MethodName::Uniform => Method::Uniform,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MethodName::EngMae => "eng_mae",
            MethodName::EngMse => "eng_mse",
            MethodName::EngKl => "eng_kl",
            MethodName::EngJeffreys => "eng_jeffreys",
            MethodName::Union => "union",
            MethodName::Uniform => "uniform",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    /// `train.ascii` and `test.ascii` rating matrices.
    Coat,
    /// Biased and uniform `user item rating` triplet files.
    Yahoo,
    /// Generated world; no files.
    Synthetic,
    /// Output of `eng prepare`.
    Canonical,
}

/// Network shapes and optimization knobs; user and item counts come from
/// the dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSpec {
    pub teacher_dim: usize,
    pub teacher_hidden: Vec<usize>,
    pub teacher_dropout: f64,
    pub student_dim: usize,
    pub student_hidden: Vec<usize>,
    pub student_dropout: f64,
    pub lambda_t: f64,
    pub lambda_s: f64,
    pub gamma_reg: f64,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub minibatch_size: usize,
    pub unobserved_batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
}

impl Default for TrainSpec {
    fn default() -> Self {
        let d = TrainConfig::default_for(1, 1);
        Self {
            teacher_dim: d.teacher.embedding_dim,
            teacher_hidden: d.teacher.hidden_sizes,
            teacher_dropout: d.teacher.dropout_rate,
            student_dim: d.student.embedding_dim,
            student_hidden: d.student.hidden_sizes,
            student_dropout: d.student.dropout_rate,
            lambda_t: d.lambda_t,
            lambda_s: d.lambda_s,
            gamma_reg: d.gamma_reg,
            optimizer: d.optimizer,
            learning_rate: d.learning_rate,
            minibatch_size: d.minibatch_size,
            unobserved_batch_size: d.unobserved_batch_size,
            max_epochs: d.max_epochs,
            patience: d.patience,
        }
    }
}

impl TrainSpec {
    pub fn materialize(&self, n_users: usize, n_items: usize, method: MethodName, seed: u64) -> TrainConfig {
        let net = |dim, hidden: &[usize], dropout| NetworkConfig {
            n_users,
            n_items,
            embedding_dim: dim,
            hidden_sizes: hidden.to_vec(),
            dropout_rate: dropout,
            init: InitRule::FanBasedUniform,
        };
        TrainConfig {
            teacher: net(self.teacher_dim, &self.teacher_hidden, self.teacher_dropout),
            student: net(self.student_dim, &self.student_hidden, self.student_dropout),
            lambda_t: self.lambda_t,
            lambda_s: self.lambda_s,
            gamma_reg: self.gamma_reg,
            reg_kind: match method.method() {
                Method::Eng(kind) => kind,
                _ => RegLossKind::Jeffreys,
            },
            optimizer: self.optimizer,
            learning_rate: self.learning_rate,
            minibatch_size: self.minibatch_size,
            unobserved_batch_size: self.unobserved_batch_size,
            max_epochs: self.max_epochs,
            patience: self.patience,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SequentialSpec {
    pub rounds: usize,
    pub rho: f64,
    pub thompson: bool,
}

impl Default for SequentialSpec {
    fn default() -> Self {
        let d = SequentialConfig::default();
        Self {
            rounds: d.rounds,
            rho: d.rho,
            thompson: d.thompson,
        }
    }
}

impl SequentialSpec {
    pub fn to_core(&self) -> SequentialConfig {
        SequentialConfig {
            rounds: self.rounds,
            rho: self.rho,
            thompson: self.thompson,
        }
    }
}

/// Generated-world settings. Without `world_seed` each run seed draws its
/// own world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSettings {
    pub users: usize,
    pub items: usize,
    pub latent_dim: usize,
    pub exposure_skew: f64,
    pub n_biased: usize,
    pub n_uniform: usize,
    pub base_logit: f64,
    pub factor_scale: f64,
    pub world_seed: Option<u64>,
}

impl Default for SyntheticSettings {
    fn default() -> Self {
        let s = SyntheticSpec::small(0);
        Self {
            users: s.n_users,
            items: s.n_items,
            latent_dim: s.latent_dim,
            exposure_skew: s.exposure_skew,
            n_biased: s.n_biased,
            n_uniform: s.n_uniform,
            base_logit: s.base_logit,
            factor_scale: s.factor_scale,
            world_seed: None,
        }
    }
}

impl SyntheticSettings {
    pub fn spec(&self, run_seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            n_users: self.users,
            n_items: self.items,
            latent_dim: self.latent_dim,
            exposure_skew: self.exposure_skew,
            n_biased: self.n_biased,
            n_uniform: self.n_uniform,
            seed: self.world_seed.unwrap_or(run_seed),
            base_logit: self.base_logit,
            factor_scale: self.factor_scale,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_schema")]
    pub schema: Schema,
    #[serde(default = "default_method")]
    pub method: MethodName,
    pub dataset: DatasetKind,
    /// Coat: train then test matrix. Yahoo: biased then uniform file.
    /// Canonical: one TSV.
    #[serde(default)]
    pub data_paths: Vec<PathBuf>,
    pub seed: u64,
    /// Explicit run seeds; when empty, `seed .. seed + replicates`.
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    pub out: PathBuf,
    #[serde(default = "default_uniform_fraction")]
    pub uniform_train_fraction: f64,
    #[serde(default)]
    pub train: TrainSpec,
    #[serde(default)]
    pub sequential: SequentialSpec,
    #[serde(default)]
    pub synthetic: SyntheticSettings,
}

fn default_schema() -> Schema {
    Schema::Conventional
}

fn default_method() -> MethodName {
    MethodName::EngJeffreys
}

fn default_replicates() -> usize {
    1
}

fn default_uniform_fraction() -> f64 {
    0.2
}

impl ExperimentConfig {
    pub fn new(dataset: DatasetKind, seed: u64, out: impl Into<PathBuf>) -> Self {
        Self {
            schema: default_schema(),
            method: default_method(),
            dataset,
            data_paths: Vec::new(),
            seed,
            seeds: Vec::new(),
            replicates: default_replicates(),
            out: out.into(),
            uniform_train_fraction: default_uniform_fraction(),
            train: TrainSpec::default(),
            sequential: SequentialSpec::default(),
            synthetic: SyntheticSettings::default(),
        }
    }

    pub fn run_seeds(&self) -> Vec<u64> {
        if self.seeds.is_empty() {
            (0..self.replicates as u64).map(|k| self.seed + k).collect()
        } else {
            self.seeds.clone()
        }
    }

    pub fn validate(&self) -> Result<(), RunnerError> {
        let bad = |m: String| Err(RunnerError::Config(m));
        if self.run_seeds().is_empty() {
            return bad("no seeds: set `seeds` or `replicates >= 1`".into());
        }
        let needed = match self.dataset {
            DatasetKind::Coat | DatasetKind::Yahoo => 2,
            DatasetKind::Canonical => 1,
            DatasetKind::Synthetic => 0,
        };
        if self.data_paths.len() != needed {
            return bad(format!(
                "dataset {:?} needs {needed} data_paths, got {}",
                self.dataset,
                self.data_paths.len()
            ));
        }
        if !(self.uniform_train_fraction > 0.0 && self.uniform_train_fraction < 1.0) {
            return bad(format!("uniform_train_fraction must lie in (0, 1), got {}", self.uniform_train_fraction));
        }
        if self.schema == Schema::Sequential {
            self.sequential.to_core().validate()?;
        }
        // Shapes are dataset-independent, so check them on a 1 x 1 grid.
        let cfg = self.train.materialize(1, 1, self.method, 0);
        if self.method.method().uses_teacher() {
            cfg.validate()?;
        } else {
            cfg.validate_single()?;
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, ignoring the output directory.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out = PathBuf::new();
        let json = serde_json::to_string(&c).expect("config serializes");
        hex(&Sha256::digest(json.as_bytes()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self, RunnerError> {
        toml::from_str(text).map_err(|e| RunnerError::Config(e.to_string()))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Every overridable field as a dotted path, in declaration order.
pub fn field_paths() -> Vec<String> {
    let mut template = ExperimentConfig::new(DatasetKind::Synthetic, 0, ".");
    template.synthetic.world_seed = Some(0);
    let mut out = Vec::new();
    collect_paths(&Value::try_from(&template).expect("config serializes"), "", &mut out);
    out
}

fn collect_paths(v: &Value, prefix: &str, out: &mut Vec<String>) {
    match v {
        Value::Table(t) => {
            for (k, child) in t {
                let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                collect_paths(child, &path, out);
            }
        }
        _ => out.push(prefix.to_string()),
    }
}

/// Resolves a flag name to a field path: an exact dotted path, or a leaf
/// name that occurs exactly once.
pub fn resolve_field(name: &str) -> Result<String, RunnerError> {
    let name = name.replace('-', "_");
    let paths = field_paths();
    if paths.iter().any(|p| *p == name) {
        return Ok(name);
    }
    let hits: Vec<&String> = paths.iter().filter(|p| p.rsplit('.').next() == Some(name.as_str())).collect();
    match hits.as_slice() {
        [one] => Ok((*one).clone()),
        [] => Err(RunnerError::Config(format!("unknown field `{name}`"))),
        many => Err(RunnerError::Config(format!("field `{name}` is ambiguous: {many:?}"))),
    }
}

/// Parses a flag value as a TOML literal, falling back to a bare string.
/// A comma-separated list without brackets becomes an array.
fn parse_value(raw: &str) -> Value {
    if let Ok(t) = toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        if let Some(v) = t.get("v") {
            return v.clone();
        }
    }
    if raw.contains(',') {
        let items: Vec<Value> = raw.split(',').map(|s| parse_value(s.trim())).collect();
        return Value::Array(items);
    }
    Value::String(raw.to_string())
}

/// Applies `(field, value)` overrides on top of a base TOML document.
pub fn apply_overrides(base: toml::Table, overrides: &[(String, String)]) -> Result<toml::Table, RunnerError> {
    let mut root = base;
    for (name, raw) in overrides {
        let path = resolve_field(name)?;
        let mut value = parse_value(raw);
        // Single values for list fields, e.g. `--seeds 3` or `--student_hidden 64`.
        if matches!(path.as_str(), "seeds" | "data_paths" | "train.teacher_hidden" | "train.student_hidden")
            && !matches!(value, Value::Array(_))
        {
            value = Value::Array(vec![value]);
        }
        let mut table = &mut root;
        let parts: Vec<&str> = path.split('.').collect();
        for part in &parts[..parts.len() - 1] {
            table = table
                .entry(part.to_string())
                .or_insert_with(|| Value::Table(toml::Table::new()))
                .as_table_mut()
                .ok_or_else(|| RunnerError::Config(format!("`{part}` is not a table")))?;
        }
        table.insert(parts[parts.len() - 1].to_string(), value);
    }
    Ok(root)
}

/// Loads an optional config file and layers flag overrides on top.
pub fn load_config(text: Option<&str>, overrides: &[(String, String)]) -> Result<ExperimentConfig, RunnerError> {
    let base: toml::Table = match text {
        Some(t) => toml::from_str(t).map_err(|e| RunnerError::Config(e.to_string()))?,
        None => toml::Table::new(),
    };
    let merged = apply_overrides(base, overrides)?;
    let cfg: ExperimentConfig = Value::Table(merged)
        .try_into()
        .map_err(|e: toml::de::Error| RunnerError::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}
