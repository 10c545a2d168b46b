//! Architecture rewrites and the shift-and-stitch reference.
//!
//! [`classifier_to_filter`] turns a patch classifier's dense head into
//! convolutions so the network slides over whole images.
//! [`remove_downsampling`] replaces strided stages by stride-1 stages with
//! dilated kernels, yielding full-resolution output with the same weights.
//! [`shift_and_stitch`] produces the same full-resolution output the slow way
//! and certifies the rewrite.

mod rewrite;
mod stitch;
mod surgery;

pub use rewrite::{achievable_keep_factors, remove_downsampling, LayerRewrite, PoolExpansion, RewriteOptions, RewriteReport};
pub use stitch::{shift_and_stitch, shift_image, Stitched};
pub use surgery::{classifier_to_filter, classify, filter_weights, ClassifierSpec, DenseWeights};
