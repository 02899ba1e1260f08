//! Teacher and student fitting, the Union/Uniform baselines, and the
//! conventional and sequential experiment schemas.
//!
//! All fits share one loop: canonical ordering of the training set,
//! per-epoch seeded shuffles, Adam (or SGD) steps in `TrainDropout` mode,
//! and early stopping on validation BCE with best-epoch restoration.
//! Training sets are sorted before use, so a fit depends on the *set* of
//! interactions and its stream, never on accumulation order.

mod schema;

use serde::{Deserialize, Serialize};

use crate::data::{Interaction, UnobservedSampler};
use crate::error::{Error, Result};
use crate::losses::{self, RegLossKind, StudentBatch};
use crate::metrics::{self, MetricsResult};
use crate::netcore::{DataTerm, ForwardMode, Gradients, LossSpec, Network, NetworkConfig, OptimizerKind, OptimizerState};
use crate::rng::RngStream;

pub use schema::{
    run_conventional, run_sequential, select_winners, ConventionalOutcome, ExperimentData, Method, RoundMetrics,
    SequentialConfig, SequentialOutcome, SequentialState,
};

/// Hyperparameter grids searched by default.
pub mod grid {
    pub const REGULARIZATION: [f64; 5] = [1e-4, 1e-3, 1e-2, 1e-1, 1.0];
    pub const MINIBATCH: [usize; 5] = [16, 32, 64, 128, 256];
    pub const EMBEDDING_DIM: [usize; 5] = [10, 20, 50, 100, 200];
    pub const HIDDEN_WIDTH: [usize; 5] = [32, 64, 128, 256, 512];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub teacher: NetworkConfig,
    pub student: NetworkConfig,
    pub lambda_t: f64,
    pub lambda_s: f64,
    pub gamma_reg: f64,
    pub reg_kind: RegLossKind,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub minibatch_size: usize,
    pub unobserved_batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl TrainConfig {
    /// Defaults sized for a Coat-like dataset.
    pub fn default_for(n_users: usize, n_items: usize) -> Self {
        let net = |dim: usize, hidden: Vec<usize>, dropout: f64| NetworkConfig {
            n_users,
            n_items,
            embedding_dim: dim,
            hidden_sizes: hidden,
            dropout_rate: dropout,
            init: Default::default(),
        };
        Self {
            teacher: net(4, vec![8], 0.0),
            student: net(16, vec![64, 32], 0.1),
            lambda_t: 1e-3,
            lambda_s: 1e-4,
            gamma_reg: 1.0,
            reg_kind: RegLossKind::Jeffreys,
            optimizer: OptimizerKind::Adam,
            learning_rate: 1e-3,
            minibatch_size: 128,
            unobserved_batch_size: 128,
            max_epochs: 50,
            patience: 5,
            seed: 0,
        }
    }

    fn validate_common(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.patience == 0 {
            return bad("patience must be >= 1".into());
        }
        if self.minibatch_size == 0 || self.max_epochs == 0 {
            return bad("minibatch_size and max_epochs must be >= 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate {} must be positive", self.learning_rate));
        }
        for (name, v) in [("lambda_t", self.lambda_t), ("lambda_s", self.lambda_s), ("gamma_reg", self.gamma_reg)] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be a nonnegative real, got {v}"));
            }
        }
        self.student.validate()
    }

    /// Full validation, including teacher capacity strictly below the
    /// student's.
    pub fn validate(&self) -> Result<()> {
        self.validate_common()?;
        self.teacher.validate()?;
        if self.gamma_reg > 0.0 && self.unobserved_batch_size == 0 {
            return Err(Error::InvalidConfig("unobserved_batch_size must be >= 1 when gamma_reg > 0".into()));
        }
        if (self.teacher.n_users, self.teacher.n_items) != (self.student.n_users, self.student.n_items) {
            return Err(Error::InvalidConfig("teacher and student must share the id space".into()));
        }
        let (p, q) = (self.teacher.param_count(), self.student.param_count());
        if p >= q {
            return Err(Error::InvalidConfig(format!(
                "teacher has {p} parameters, student {q}; the teacher must be strictly smaller"
            )));
        }
        Ok(())
    }

    /// Validation for single-network baselines, which ignore the teacher.
    pub fn validate_single(&self) -> Result<()> {
        self.validate_common()
    }
}

/// Early stopping on validation BCE.
#[derive(Debug, Clone)]
pub struct EarlyStopper {
    best: f64,
    best_epoch: usize,
    since_improvement: usize,
    patience: usize,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> Self {
        Self {
            best: f64::INFINITY,
            best_epoch: 0,
            since_improvement: 0,
            patience,
        }
    }

    /// Records an epoch's validation BCE. Returns `true` when this epoch is
    /// the new best.
    pub fn observe(&mut self, epoch: usize, val_bce: f64) -> bool {
        if val_bce < self.best {
            self.best = val_bce;
            self.best_epoch = epoch;
            self.since_improvement = 0;
            true
        } else {
            self.since_improvement += 1;
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.since_improvement >= self.patience
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

/// A fitted network with its validation summary.
#[derive(Debug, Clone)]
pub struct FitReport {
    pub net: Network,
    /// 0 means the initial parameters were never beaten.
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub val_bce: f64,
    /// `None` when the validation set holds a single class.
    pub val_auc: Option<f64>,
}

impl FitReport {
    pub fn val_metrics(&self) -> Option<MetricsResult> {
        self.val_auc.map(|auc| MetricsResult {
            auc,
            bce: self.val_bce,
            n_pos: 0,
            n_neg: 0,
        })
    }
}

enum Objective<'a> {
    Plain { lambda: f64, uniform_only: bool },
    Distill {
        teacher: &'a Network,
        sampler: UnobservedSampler,
        gamma: f64,
        lambda: f64,
        kind: RegLossKind,
        unobserved_batch: usize,
    },
}

fn val_bce(net: &Network, val: &[Interaction]) -> Result<f64> {
    let pairs: Vec<(usize, usize)> = val.iter().map(Interaction::pair).collect();
    let labels: Vec<bool> = val.iter().map(|x| x.label).collect();
    metrics::bce_eval(&net.predict(&pairs)?, &labels)
}

fn fit(
    config: &NetworkConfig,
    objective: Objective<'_>,
    train: &[Interaction],
    val: &[Interaction],
    cfg: &TrainConfig,
    rng: &RngStream,
) -> Result<FitReport> {
    if train.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if val.is_empty() {
        return Err(Error::Empty("validation set"));
    }
    let mut data = train.to_vec();
    data.sort_unstable();

    let mut net = Network::init(config.clone(), &mut rng.split("init"))?;
    let mut opt = OptimizerState::new(cfg.optimizer, cfg.learning_rate)?;
    let mut dropout = rng.split("dropout");
    let mut grads = Gradients::zeros_for(&net);

    let mut stopper = EarlyStopper::new(cfg.patience);
    stopper.observe(0, val_bce(&net, val)?);
    let mut best = net.clone();
    let mut epochs_run = 0;

    let mut objective = objective;
    if let Objective::Distill { sampler, .. } = &mut objective {
        *sampler = sampler.with_stream(rng.split("unobserved"));
    }

    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut batch: Vec<Interaction> = Vec::with_capacity(cfg.minibatch_size);
    for epoch in 1..=cfg.max_epochs {
        rng.split_indexed("epoch", epoch as u64).shuffle(&mut order);
        for chunk in order.chunks(cfg.minibatch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&k| data[k]));
            match &mut objective {
                Objective::Plain { lambda, uniform_only: true } => {
                    let (_, g) = losses::teacher_loss_and_grads(&net, &batch, *lambda, ForwardMode::TrainDropout, &mut dropout)?;
                    grads = g;
                }
                Objective::Plain { lambda, uniform_only: false } => {
                    let terms: Vec<DataTerm> = batch
                        .iter()
                        .map(|x| DataTerm {
                            user: x.user,
                            item: x.item,
                            label: x.label,
                        })
                        .collect();
                    let spec = LossSpec {
                        data: &terms,
                        distill: &[],
                        reg_kind: RegLossKind::Mse,
                        distill_coef: 0.0,
                        l2_coef: *lambda,
                    };
                    net.loss_and_grads_into(&spec, ForwardMode::TrainDropout, &mut dropout, &mut grads)?;
                }
                Objective::Distill {
                    teacher,
                    sampler,
                    gamma,
                    lambda,
                    kind,
                    unobserved_batch,
                } => {
                    let (unobserved, targets) = if *gamma > 0.0 {
                        let pairs = sampler.sample(*unobserved_batch);
                        let targets = teacher.predict(&pairs)?;
                        (pairs, targets)
                    } else {
                        (Vec::new(), Vec::new())
                    };
                    let (_, g) = losses::student_loss_and_grads(
                        &net,
                        StudentBatch {
                            observed: &batch,
                            unobserved: &unobserved,
                            teacher_targets: &targets,
                        },
                        *gamma,
                        *lambda,
                        *kind,
                        ForwardMode::TrainDropout,
                        &mut dropout,
                    )?;
                    grads = g;
                }
            }
            opt.apply_update(&mut net, &grads)?;
        }
        epochs_run = epoch;
        if stopper.observe(epoch, val_bce(&net, val)?) {
            best = net.clone();
        }
        if stopper.should_stop() {
            break;
        }
    }

    let pairs: Vec<(usize, usize)> = val.iter().map(Interaction::pair).collect();
    let labels: Vec<bool> = val.iter().map(|x| x.label).collect();
    let val_auc = metrics::auc(&best.predict(&pairs)?, &labels).ok();
    Ok(FitReport {
        net: best,
        best_epoch: stopper.best_epoch(),
        epochs_run,
        val_bce: stopper.best(),
        val_auc,
    })
}

/// Fits the small teacher on uniform-source data only.
pub fn train_teacher(
    uniform_train: &[Interaction],
    uniform_val: &[Interaction],
    cfg: &TrainConfig,
    rng: &RngStream,
) -> Result<FitReport> {
    cfg.validate()?;
    fit(
        &cfg.teacher,
        Objective::Plain {
            lambda: cfg.lambda_t,
            uniform_only: true,
        },
        uniform_train,
        uniform_val,
        cfg,
        rng,
    )
}

/// Fits the student on `S^r ∪ S^b`, pulled toward the frozen teacher on
/// a fresh unobserved minibatch each step.
pub fn train_student(
    teacher: &Network,
    s_r: &[Interaction],
    s_b: &[Interaction],
    unobserved: &UnobservedSampler,
    uniform_val: &[Interaction],
    cfg: &TrainConfig,
    rng: &RngStream,
) -> Result<FitReport> {
    cfg.validate()?;
    let observed: Vec<Interaction> = s_r.iter().chain(s_b).copied().collect();
    fit(
        &cfg.student,
        Objective::Distill {
            teacher,
            sampler: unobserved.clone(),
            gamma: cfg.gamma_reg,
            lambda: cfg.lambda_s,
            kind: cfg.reg_kind,
            unobserved_batch: cfg.unobserved_batch_size,
        },
        &observed,
        uniform_val,
        cfg,
        rng,
    )
}

/// Single student-sized network on `D^r_train ∪ D^b`.
pub fn train_union(
    uniform_train: &[Interaction],
    biased: &[Interaction],
    uniform_val: &[Interaction],
    cfg: &TrainConfig,
    rng: &RngStream,
) -> Result<FitReport> {
    cfg.validate_single()?;
    let all: Vec<Interaction> = uniform_train.iter().chain(biased).copied().collect();
    fit(
        &cfg.student,
        Objective::Plain {
            lambda: cfg.lambda_s,
            uniform_only: false,
        },
        &all,
        uniform_val,
        cfg,
        rng,
    )
}

/// Single student-sized network on `D^r_train` alone.
pub fn train_uniform(
    uniform_train: &[Interaction],
    uniform_val: &[Interaction],
    cfg: &TrainConfig,
    rng: &RngStream,
) -> Result<FitReport> {
    train_union(uniform_train, &[], uniform_val, cfg, rng)
}
