//! Minimal dense tensors with reverse-mode autodiff, the convolutional
//! building blocks, and the compact encoder-decoder network.

pub mod checkpoint;
pub mod gradcheck;
pub mod net;
pub mod ops;
mod real;
pub mod sgd;
mod tensor;

pub use net::{Network, NetworkConfig};
pub use real::Real;
pub use sgd::{apply_gradients, sgd_step, Parameter};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("{op}: shape mismatch, expected {expected}, got {actual}")]
    ShapeMismatch {
        op: &'static str,
        expected: String,
        actual: String,
    },
    #[error("{op}: produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("missing gradient for {name}")]
    MissingGrad { name: String },
    #[error("{op}: expected a scalar, got shape {shape}")]
    NotScalar { op: &'static str, shape: String },
    #[error("bad checkpoint: {msg}")]
    Checkpoint { msg: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("bad network config: {why}")]
    Config { why: String },
}
