//! Training side of the vqprobe harness: a small reverse-mode tensor engine,
//! AdamW with a warmup/step-decay schedule, checkpoints, and the
//! transformer encoder-decoder that reasons over text and visual tokens.

mod attention;
pub mod checkpoint;
mod gemm;
pub mod model;
pub mod optim;
pub mod param;
pub mod tape;
pub mod tensor;

use thiserror::Error;

pub use checkpoint::{Checkpoint, RngState};
pub use optim::{AdamW, LrSchedule};
pub use param::{Param, ParamId, ParamStore};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("{op}: mask of shape {got:?} does not fit {expected:?}")]
    Mask {
        op: &'static str,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("loss must be a scalar, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("tape already consumed by a backward pass")]
    SingleUse,
    #[error("non-finite gradient in parameter `{0}`")]
    NonFiniteGradient(String),
    #[error("answer {answer} does not belong to the {expected} head")]
    VariantMismatch { expected: &'static str, answer: String },
    #[error("model config: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
