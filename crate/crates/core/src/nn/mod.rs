//! Small dense-network toolkit used by the agents.

mod adam;
mod checkpoint;
mod mlp;
mod policy;
mod replay;

pub use adam::{adam_update, AdamConfig, AdamState, ScalarAdam};
pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC};
pub use mlp::{ForwardCache, Mlp, Tensors};
pub use policy::{
    gaussian_tanh_sample, SquashedBatch, LOG_STD_MAX, LOG_STD_MIN,
};
pub use replay::{Batch, ReplayBuffer, Transition};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("{what}: expected {expected}, got {got}")]
    Shape { what: &'static str, expected: usize, got: usize },
    #[error("non-finite input to {0}")]
    NonFinite(&'static str),
    #[error("replay buffer holds {size} transitions, cannot sample {batch}")]
    Underfilled { size: usize, batch: usize },
    #[error("checkpoint line {line}: {msg}")]
    Checkpoint { line: usize, msg: String },
    #[error("invalid layer dims {0:?}")]
    Dims([usize; 4]),
}
