//! Federated segmentation on synthetic SEM imagery and gradient-inversion
//! leakage analysis.
//!
//! Numeric code is generic over [`Scalar`]; the aliases at the bottom fix the
//! precision used by the experiment pipeline.

pub mod attack;
pub mod datagen;
pub mod error;
pub mod fed;
pub mod grid;
pub mod metrics;
pub mod model;
pub mod scalar;
pub mod seed;

pub use error::{Error, Result};
pub use grid::Grid;
pub use scalar::{DType, Dual, Scalar, StorageScalar};

/// Working precision of the experiment pipeline.
pub type Real = f64;
pub type Image = Grid<Real>;
pub type Weights = model::ModelWeights<Real>;
pub type Gradient = model::GradientEstimate<Real>;
/// Reduced-precision weights, e.g. for compact snapshots.
pub type WeightsF32 = model::ModelWeights<f32>;
