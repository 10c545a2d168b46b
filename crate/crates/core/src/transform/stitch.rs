use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::net::{forward, receptive_field, Inputs, Mode, NetworkSpec, WeightStore};
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone)]
pub struct Stitched<T> {
    /// Interleaved output, `stride` times the coarse extent on each axis.
    pub dense: Tensor<T>,
    pub stride: usize,
    /// Forward passes actually run (`stride^2`).
    pub passes: usize,
}

/// `out[y, x] = img[y + dy, x + dx]`, zero where that falls off the image.
pub fn shift_image<T: Scalar>(img: &Tensor<T>, dy: usize, dx: usize) -> Tensor<T> {
    let s = img.shape();
    let mut out = Tensor::zeros(s).expect("shape already valid");
    if dy >= s.h || dx >= s.w {
        return out;
    }
    for n in 0..s.n {
        for c in 0..s.c {
            let src = img.plane(n, c);
            let dst = out.plane_mut(n, c);
            for y in 0..s.h - dy {
                let from = (y + dy) * s.w + dx;
                dst[y * s.w..y * s.w + s.w - dx].copy_from_slice(&src[from..from + s.w - dx]);
            }
        }
    }
    out
}

/// Full-resolution output of a downsampling network by running it once per
/// sub-stride offset and interleaving the coarse maps:
/// `dense[y, x] = pass(y mod s, x mod s)[y div s, x div s]`.
///
/// For unpadded networks the result equals the rewritten stride-1 network on
/// its whole output extent. With padding, the two differ wherever a receptive
/// field crosses the image border, because each pass sees zeros at a
/// different place.
pub fn shift_and_stitch<T: Scalar>(net: &NetworkSpec, w: &WeightStore<T>, inputs: &Inputs<T>) -> Result<Stitched<T>> {
    let stride = receptive_field(net)?.stride;
    let counter = AtomicUsize::new(0);
    let offsets: Vec<(usize, usize)> = (0..stride).flat_map(|dy| (0..stride).map(move |dx| (dy, dx))).collect();
    let coarse: Vec<Tensor<T>> = offsets
        .par_iter()
        .map(|&(dy, dx)| {
            let shifted: Inputs<T> = inputs
                .iter()
                .map(|(k, v)| (k.clone(), shift_image(v, dy, dx)))
                .collect();
            counter.fetch_add(1, Ordering::Relaxed);
            Ok(forward(net, w, &shifted, Mode::Test)?.into_output())
        })
        .collect::<Result<_>>()?;
    let cs = coarse[0].shape();
    if coarse.iter().any(|t| t.shape() != cs) {
        return Err(Error::State("shifted passes produced different extents".into()));
    }
    let mut ds = cs;
    ds.h *= stride;
    ds.w *= stride;
    let dense = Tensor::from_fn(ds, |n, c, y, x| {
        coarse[(y % stride) * stride + x % stride].at(n, c, y / stride, x / stride)
    })?;
    Ok(Stitched {
        dense,
        stride,
        passes: counter.into_inner(),
    })
}
