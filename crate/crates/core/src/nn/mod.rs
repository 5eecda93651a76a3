//! Dense tensors, reverse-mode autodiff and the layers the tagger is built
//! from.

mod graph;
mod gradcheck;
mod layers;
mod optim;
mod params;
mod tensor;


pub use graph::{log_softmax_into, log_sum_exp, sigmoid, Activation, BatchStats, CustomOp, Graph, Var};
pub use gradcheck::{grad_check, grad_check_fn, grad_check_store, relative_error};
pub(crate) use layers::lookup;
pub use layers::{
    dense_forward, dropout_mask, lstm_cell, BatchNorm, BiLstm, BiLstmOutput, Ctx, Dense, Lstm, Mode,
};
pub use optim::{clip_global_norm, Adam, AdamConfig};
pub use params::{glorot_uniform, Param, ParamId, ParamKind, ParamStore};
pub use tensor::{Scalar, Tensor};

/// Seeded generator used for every random draw, so runs are reproducible
/// across platforms.
pub type Rng = rand_chacha::ChaCha8Rng;

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("index out of range: {0}")]
    Index(String),
    #[error("non-finite value produced by node {node} ({op})")]
    NonFinite { node: usize, op: &'static str },
    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("backward already ran on this graph; reset gradients first")]
    DoubleBackward,
    #[error("batch normalization needs at least 2 rows in train mode, got {0}")]
    BatchTooSmall(usize),
    #[error("dropout rate must be in [0, 1), got {0}")]
    DropoutRate(f64),
    #[error("empty sequence")]
    EmptySequence,
    #[error("duplicate parameter name `{0}`")]
    DuplicateParam(String),
    #[error("{0}")]
    Invalid(String),
}
