//! Target-specific transformation networks for target-level sentiment
//! classification.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autograd;
pub mod checkpoint;
pub mod cpt;
pub mod encoders;
pub mod error;
pub mod exec;
pub mod experiment;
pub mod gradcheck;
pub mod head;
pub mod model;
pub mod params;
pub mod pipeline;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use model::{Model, ModelConfig, Variant};
pub use params::ParamStore;
pub use tensor::Tensor;
