//! Numerical kernels: dilated convolution, max pooling, activations,
//! bilinear upsampling and channel concatenation, each with its backward
//! counterpart.

mod activation;
mod concat;
mod conv;
mod pool;
pub mod running;
mod upsample;

pub use activation::{relu, relu_backward, softmax_backward, softmax_channels};
pub use concat::{concat_channels, split_channels};
pub use conv::{conv2d, conv2d_backward, ConvGrads, ConvParams};
pub use pool::{maxpool2d, maxpool2d_backward, ArgIndices, NO_SOURCE};
pub use upsample::{bilinear_upsample, bilinear_upsample_backward};
