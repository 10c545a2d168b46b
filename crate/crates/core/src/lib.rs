//! Fully convolutional network engine for dense labelling of overhead
//! imagery.
//!
//! The crate covers the tensor kernels, a small declarative network graph
//! with forward and backward execution, the two architecture rewrites
//! (classifier to filter, and removing downsampling by dilation), the
//! shift-and-stitch reference, an analytical cost model, training, tiled
//! inference and the evaluation protocol.

pub mod cost;
pub mod error;
pub mod io;
pub mod kernels;
pub mod metrics;
pub mod net;
pub mod pipeline;
pub mod raster;
pub mod tensor;
pub mod trainer;
pub mod transform;

pub use error::{Error, Result};
pub use kernels::ConvParams;
pub use net::{LayerKind, LayerSpec, NetworkSpec, WeightStore};
pub use pipeline::SceneRaster;
pub use raster::{IgnoreMask, LabelImage};
pub use tensor::{Scalar, Shape, Tensor};
