//! Small dense / convolutional / recurrent network engine with exact
//! backpropagation through time, Adam, and finite-difference verification.
//!
//! Everything is generic over [`Real`] so the same code path trains in `f32`
//! and is gradient-checked in `f64`.

mod adam;
pub mod checkpoint;
mod conv;
mod gemm;
mod gradcheck;
mod lstm;
mod network;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use conv::{conv2d_forward, conv_output_dim};
pub use gemm::Real;
pub use gradcheck::{check_against, finite_difference_check, relative_error, GradCheckReport, Window};
pub use lstm::lstm_step;
pub use network::{
    Activation, Architecture, InitScheme, LayerKind, LayerParams, LayerSpec, Network,
    RecurrentState, Tape,
};
pub use tensor::Tensor3;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid architecture: {0}")]
    Architecture(String),
    #[error("non-finite gradient at parameter index {index}")]
    NonFiniteGradient { index: usize },
    #[error("tape does not match this network or batch: {0}")]
    Tape(String),
}
