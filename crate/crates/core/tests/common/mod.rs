//! Helpers shared by the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use stride_zero_core::net::{parse_spec, Inputs};
use stride_zero_core::{Scalar, Shape, NetworkSpec, Tensor};

pub fn specs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../specs")
}

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn load_spec(file: &str) -> NetworkSpec {
    let path = specs_dir().join(file);
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    parse_spec(&text).unwrap_or_else(|e| panic!("{file}: {e}"))
}

pub fn random_tensor<T: Scalar>(rng: &mut ChaCha8Rng, shape: Shape) -> Tensor<T> {
    Tensor::from_fn(shape, |_, _, _, _| T::of(rng.gen_range(-1.0..1.0))).unwrap()
}

/// One random tensor per input branch, all `h x w`.
pub fn random_inputs<T: Scalar>(rng: &mut ChaCha8Rng, net: &NetworkSpec, h: usize, w: usize) -> Inputs<T> {
    net.input_branches()
        .into_iter()
        .map(|(name, c)| (name.to_string(), random_tensor(rng, Shape::new(1, c, h, w))))
        .collect()
}

/// Random unpadded conv/relu/pool chain with downsampling factor `stride`
/// (a power of two) whose support fits in 32 pixels.
pub fn random_strided_net(rng: &mut ChaCha8Rng, stride: usize) -> NetworkSpec {
    let stages = stride.trailing_zeros() as usize;
    let mut text = String::from("input x channels=");
    text += &format!("{}\n", rng.gen_range(1..=3));
    for s in 0..stages {
        let k = rng.gen_range(1..=3);
        text += &format!("c{s} conv k={k} c={}\n", rng.gen_range(1..=4));
        if rng.gen_bool(0.7) {
            text += &format!("r{s} relu\n");
        }
        if rng.gen_bool(0.25) {
            // Stride carried by a conv instead of a pool.
            text += &format!("d{s} conv k=2 s=2 c={}\n", rng.gen_range(1..=4));
        } else {
            text += &format!("p{s} pool k={} s=2\n", rng.gen_range(2..=3));
        }
    }
    // Worst case support is 29 before the head at stride 8.
    let head = if stride >= 8 { 1 } else { rng.gen_range(1..=2) };
    text += &format!("head conv k={head} c=2\n");
    parse_spec(&text).unwrap()
}
