//! Residual squeeze-and-excitation encoder-decoder for single-image rain
//! removal, with the tensor and autodiff machinery it needs.

pub mod autodiff;
pub mod config;
pub mod data;
pub mod error;
pub mod float;
pub mod gradcheck;
pub mod metrics;
pub mod model;
pub mod parallel;
pub mod tensor;
pub mod train;

pub use error::{CheckpointError, ConfigError, DataError, Error, Result, TensorError};
pub use float::Float;
pub use parallel::{set_parallelism, Parallelism};
pub use tensor::{Dims, Tensor};
