//! Axis-mixing MLP fusion over rank-3 multimodal feature tensors.
//!
//! A feature cube of shape (sequence, modality, channel) flows through
//! stacked blocks; each block mixes one axis at a time with a shared
//! two-affine MLP unit, then the flattened output feeds a scalar regression
//! head. Gradients are hand-written reverse-mode over a recorded tape and
//! verified against central finite differences.
//!
//! The `parallel` feature (on by default) runs the fiber kernels and batch
//! evaluation on rayon; results are bit-identical to the sequential
//! fallback, so training stays reproducible either way.

pub mod data;
pub mod error;
pub mod gradcheck;
pub mod layers;
pub mod objectives;
pub mod scalar;
pub mod tensor3;
pub mod trainer;

pub use error::{Error, ErrorClass, Result};
pub use scalar::Scalar;
pub use tensor3::{Axis, Mat, Shape3, Tensor3};
