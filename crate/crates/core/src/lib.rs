pub mod error;
pub mod mesh;
pub mod net;
pub mod polyfilter;
pub mod polyshape;
pub mod tasks;

pub use error::{Error, Result};

/// Per-vertex channel values, one row per vertex.
pub type FeatureMatrix = ndarray::Array2<f64>;
