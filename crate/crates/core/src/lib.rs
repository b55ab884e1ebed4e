//! Tracking by detection queries: a learned associator that consumes a frozen
//! detector's queries, plus the lifecycle, training, simulation, baseline and
//! file-format pieces around it.

pub mod assignment;
pub mod associator;
pub mod autograd;
pub mod baseline;
pub mod detsim;
pub mod error;
pub mod geometry;
pub mod io;
pub mod lifecycle;
pub mod nn;
pub mod posenc;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use geometry::BoundingBox;
pub use tensor::Matrix;
