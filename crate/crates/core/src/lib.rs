//! Embedding-table compression for click-through-rate models.
//!
//! The pipeline trains a shared-weight supernet while pruning redundant
//! embedding rows with learnable field-wise thresholds, searches per-field
//! embedding dimensions with an evolutionary algorithm, and finally retrains
//! the compressed table from scratch.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix the scalar for the common cases.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod io;
pub mod mask;
pub mod matrix;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod pipeline;
pub mod prune;
pub mod rng;
pub mod scalar;
pub mod search;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use mask::{DimensionMask, EmbeddingMask};
pub use matrix::Matrix;
pub use rng::Rng;
pub use scalar::Scalar;

pub type Matrix64 = Matrix<f64>;
pub type Matrix32 = Matrix<f32>;
pub type CtrModel64 = model::CtrModel<f64>;
pub type CtrModel32 = model::CtrModel<f32>;
pub type ThresholdVector64 = prune::ThresholdVector<f64>;
pub type Supernet64 = pipeline::Supernet<f64>;
pub type Retrained64 = pipeline::Retrained<f64>;
