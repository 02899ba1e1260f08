//! Teacher-student recommendation debiasing from a small uniform log,
//! with dropout-based Thompson sampling and a sequential self-feedback
//! training schema.
//!
//! Module map:
//!
//! - [`netcore`]: embedding + MLP scorer, gradients, optimizers, checkpoints
//! - [`losses`]: BCE, L2, distillation discrepancies, composite objectives
//! - [`data`]: loaders, splits, batching, unobserved sampling, synthetic worlds
//! - [`metrics`]: AUC and BCE evaluation
//! - [`trainer`]: teacher/student fitting, baselines, the sequential loop

pub mod data;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod netcore;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
pub use rng::RngStream;
