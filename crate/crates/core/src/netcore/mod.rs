//! Deterministic feedforward scorer shared by teacher and student.
//!
//! Input is the concatenation of a user and an item embedding; hidden
//! layers are ReLU followed by inverted dropout; the head is a single
//! sigmoid unit. Gradients are computed analytically for this fixed
//! architecture.

mod checkpoint;
mod network;
mod optimizer;
mod params;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_VERSION};
pub use network::{
    DataTerm, DistillTerm, ForwardMode, Gradients, InitRule, LossSpec, Network, NetworkConfig,
};
pub use optimizer::{OptimizerKind, OptimizerState};
pub use params::{Dense, Params};
