use serde::{Deserialize, Serialize};

use super::{train_student, train_teacher, train_union, train_uniform, FitReport, TrainConfig};
use crate::data::{partition_batches, split_uniform, Dataset, Interaction, Source, SplitSpec, UnobservedSampler};
use crate::error::{Error, Result};
use crate::losses::RegLossKind;
use crate::metrics::{evaluate, MetricsResult};
use crate::netcore::{ForwardMode, Network};
use crate::rng::RngStream;

/// Which learner a run trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    /// Teacher-student with the given discrepancy.
    Eng(RegLossKind),
    /// One network on all logged data.
    Union,
    /// One network on uniform data only.
    Uniform,
}

impl Method {
    pub fn uses_teacher(self) -> bool {
        matches!(self, Method::Eng(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SequentialConfig {
    /// Number of rounds (batches per log).
    pub rounds: usize,
    /// Fraction of each biased batch admitted into training.
    pub rho: f64,
    /// Score candidates with dropout on (one posterior sample per item).
    pub thompson: bool,
}

impl Default for SequentialConfig {
    fn default() -> Self {
        Self {
            rounds: 20,
            rho: 0.5,
            thompson: true,
        }
    }
}

impl SequentialConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::InvalidConfig("rounds must be >= 1".into()));
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(Error::InvalidConfig(format!("rho must lie in (0, 1], got {}", self.rho)));
        }
        Ok(())
    }
}

/// The uniform three-way split, the biased log, and the unobserved-pair
/// sampler over every logged pair.
#[derive(Debug, Clone)]
pub struct ExperimentData {
    pub uniform_train: Vec<Interaction>,
    pub biased: Vec<Interaction>,
    pub validation: Vec<Interaction>,
    pub test: Vec<Interaction>,
    pub unobserved: UnobservedSampler,
}

impl ExperimentData {
    pub fn from_dataset(dataset: &Dataset, split: &SplitSpec) -> Result<Self> {
        let splits = split_uniform(&dataset.by_source(Source::Uniform), split)?;
        let unobserved = UnobservedSampler::new(
            dataset.observed_pairs(),
            dataset.n_users(),
            dataset.n_items(),
            RngStream::new(split.seed).split("unobserved"),
        )?;
        Ok(Self {
            uniform_train: splits.train,
            biased: dataset.by_source(Source::Biased),
            validation: splits.validation,
            test: splits.test,
            unobserved,
        })
    }
}

/// Scores `batch`, sorts descending (ties keep the lower original index)
/// and keeps the top `floor(rho * len)`, at least one.
pub fn select_winners(
    student: &Network,
    batch: &[Interaction],
    rho: f64,
    thompson: bool,
    rng: &mut RngStream,
) -> Result<(Vec<Interaction>, Vec<Interaction>)> {
    if batch.is_empty() {
        return Err(Error::Empty("candidate batch"));
    }
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::InvalidConfig(format!("rho must lie in (0, 1], got {rho}")));
    }
    let mode = if thompson {
        ForwardMode::StochasticInference
    } else {
        ForwardMode::Deterministic
    };
    let pairs: Vec<(usize, usize)> = batch.iter().map(Interaction::pair).collect();
    let scores = student.forward_batch(&pairs, mode, rng)?;
    let mut order: Vec<usize> = (0..batch.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let count = winner_count(batch.len(), rho);
    let winners = order[..count].iter().map(|&k| batch[k]).collect();
    let discarded = order[count..].iter().map(|&k| batch[k]).collect();
    Ok((winners, discarded))
}

fn winner_count(len: usize, rho: f64) -> usize {
    (((rho * len as f64) + 1e-9).floor() as usize).clamp(1, len)
}

/// Test metrics recorded after one round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: usize,
    pub test: MetricsResult,
    pub val_bce: f64,
    pub val_auc: Option<f64>,
    pub n_sr: usize,
    pub n_sb: usize,
    pub n_discarded: usize,
}

/// Bookkeeping of the sequential loop.
#[derive(Debug, Clone)]
pub struct SequentialState {
    pub round: usize,
    pub s_r: Vec<Interaction>,
    pub s_b: Vec<Interaction>,
    /// Candidates never admitted; kept only for auditing.
    pub discarded: Vec<Interaction>,
    pub student: Network,
    pub history: Vec<RoundMetrics>,
}

#[derive(Debug, Clone)]
pub struct SequentialOutcome {
    pub student: Network,
    pub state: SequentialState,
}

fn fit_round(
    method: Method,
    s_r: &[Interaction],
    s_b: &[Interaction],
    data: &ExperimentData,
    cfg: &TrainConfig,
    rng: &RngStream,
) -> Result<FitReport> {
    match method {
        Method::Eng(kind) => {
            let cfg = TrainConfig {
                reg_kind: kind,
                ..cfg.clone()
            };
            let teacher = train_teacher(s_r, &data.validation, &cfg, &rng.split("teacher"))?;
            train_student(
                &teacher.net,
                s_r,
                s_b,
                &data.unobserved,
                &data.validation,
                &cfg,
                &rng.split("student"),
            )
        }
        Method::Union => train_union(s_r, s_b, &data.validation, cfg, &rng.split("student")),
        Method::Uniform => train_uniform(s_r, &data.validation, cfg, &rng.split("student")),
    }
}

/// The sequential self-feedback schema.
///
/// Both logs are cut into `rounds` batches. Each round the previous
/// student scores the next biased batch; the top `rho` share joins `S^b`
/// while the next uniform batch joins `S^r`. Teacher and student are then
/// re-initialized and refit from scratch, and the student is evaluated on
/// the uniform test split.
pub fn run_sequential(
    data: &ExperimentData,
    cfg: &TrainConfig,
    scfg: &SequentialConfig,
    method: Method,
    rng: &RngStream,
) -> Result<SequentialOutcome> {
    scfg.validate()?;
    if method.uses_teacher() {
        cfg.validate()?;
    } else {
        cfg.validate_single()?;
    }
    let uniform_batches = partition_batches(&data.uniform_train, scfg.rounds, &mut rng.split("uniform-batches"))?;
    let biased_batches = partition_batches(&data.biased, scfg.rounds, &mut rng.split("biased-batches"))?;

    let student0 = Network::init(cfg.student.clone(), &mut rng.split("student-init-0"))?;
    let mut state = SequentialState {
        round: 0,
        s_r: Vec::new(),
        s_b: Vec::new(),
        discarded: Vec::new(),
        student: student0,
        history: Vec::new(),
    };

    for (i, (d_r, d_b)) in uniform_batches.iter().zip(&biased_batches).enumerate() {
        let round = i + 1;
        let round_rng = rng.split_indexed("round", round as u64);
        let (winners, losers) =
            select_winners(&state.student, d_b, scfg.rho, scfg.thompson, &mut round_rng.split("select"))?;
        state.s_b.extend(winners);
        state.discarded.extend(losers);
        state.s_r.extend_from_slice(d_r);

        let report = fit_round(method, &state.s_r, &state.s_b, data, cfg, &round_rng)?;
        let test = evaluate(&report.net, &data.test)?;
        state.student = report.net;
        state.round = round;
        state.history.push(RoundMetrics {
            round,
            test,
            val_bce: report.val_bce,
            val_auc: report.val_auc,
            n_sr: state.s_r.len(),
            n_sb: state.s_b.len(),
            n_discarded: state.discarded.len(),
        });
    }
    Ok(SequentialOutcome {
        student: state.student.clone(),
        state,
    })
}

#[derive(Debug, Clone)]
pub struct ConventionalOutcome {
    pub student: Network,
    pub teacher: Option<Network>,
    pub fit: FitReport,
    pub test: MetricsResult,
}

/// One-shot schema: teacher on the uniform training split, student (or
/// baseline) on the uniform training split plus the whole biased log.
pub fn run_conventional(
    data: &ExperimentData,
    cfg: &TrainConfig,
    method: Method,
    rng: &RngStream,
) -> Result<ConventionalOutcome> {
    let (fit, teacher) = match method {
        Method::Eng(kind) => {
            let cfg = TrainConfig {
                reg_kind: kind,
                ..cfg.clone()
            };
            let teacher = train_teacher(&data.uniform_train, &data.validation, &cfg, &rng.split("teacher"))?;
            let student = train_student(
                &teacher.net,
                &data.uniform_train,
                &data.biased,
                &data.unobserved,
                &data.validation,
                &cfg,
                &rng.split("student"),
            )?;
            (student, Some(teacher.net))
        }
        Method::Union => (
            train_union(&data.uniform_train, &data.biased, &data.validation, cfg, &rng.split("student"))?,
            None,
        ),
        Method::Uniform => (
            train_uniform(&data.uniform_train, &data.validation, cfg, &rng.split("student"))?,
            None,
        ),
    };
    let test = evaluate(&fit.net, &data.test)?;
    Ok(ConventionalOutcome {
        student: fit.net.clone(),
        teacher,
        fit,
        test,
    })
}
