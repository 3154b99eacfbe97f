//! Reverse-mode automatic differentiation over `f64` tensors, sized for
//! small convolutional classifiers: conv2d, dense, batch norm, pooling,
//! activations, softmax cross-entropy, plus the Adam optimizer and a flat
//! binary checkpoint format.

pub mod adam;
pub mod checkpoint;
pub mod error;
pub mod gradcheck;
pub mod graph;
mod linalg;
pub mod nn;
pub mod params;
pub mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use error::{GradError, Result};
pub use gradcheck::{grad_check, grad_check_params, operator_suite, GradCheckReport, OperatorCheck};
pub use graph::{Activation, BatchStats, BnMode, Graph, Var};
pub use nn::{BatchNorm2d, Conv2d, Dense, Mode};
pub use params::{he_uniform, mix_seed, name_hash, ParamId, ParamStore, Parameter};
pub use tensor::Tensor;
