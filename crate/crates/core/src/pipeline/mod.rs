//! Data preparation and whole-raster inference.
//!
//! Scenes carry float bands (optical bands in 0..=255 followed by an
//! optional elevation band) with a label raster. Training consumes
//! augmented, mean-subtracted, non-overlapping tiles; inference runs on
//! overlapping tiles whose interiors are mosaicked back together.

mod augment;
mod norm;
mod scene;
mod synth;
mod tiles;

pub use augment::{augment, inscribed_rect, rotate_scene, AugmentOptions, Augmentation, AugmentResult};
pub use norm::{mean_subtract, BandMeans};
pub use scene::SceneRaster;
pub use synth::{synth_scene, SYNTH_BANDS};
pub use tiles::{make_training_tiles, predict_labels, tiled_inference, training_set, TilePlan, DEFAULT_TEST_TILE};
