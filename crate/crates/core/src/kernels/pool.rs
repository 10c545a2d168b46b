use rayon::prelude::*;

use super::conv::ConvParams;
use super::running::sliding_best;
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Shape, Tensor};

/// Marks an output whose window held only padding.
pub const NO_SOURCE: usize = usize::MAX;

/// For every pooled output, the linear index into the input tensor of the
/// element that was selected, or [`NO_SOURCE`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArgIndices {
    pub input_shape: Shape,
    pub output_shape: Shape,
    pub indices: Vec<usize>,
}

#[derive(Clone, Copy)]
struct Cand<T> {
    v: T,
    idx: usize,
}

// Larger value wins; equal values go to the lower input index. Padding has
// value -inf and index NO_SOURCE so a real pixel always beats it.
#[inline]
fn better<T: Scalar>(a: &Cand<T>, b: &Cand<T>) -> bool {
    a.v > b.v || (a.v == b.v && a.idx < b.idx)
}

/// Best candidate over `k` taps spaced `dil` apart, for output positions
/// `o*stride - pad`, computed with a running max per residue class.
fn pool_line<T: Scalar>(line: &[Cand<T>], k: usize, stride: usize, pad: usize, dil: usize, out_len: usize) -> Vec<Cand<T>> {
    let pad_cand = Cand {
        v: T::neg_infinity(),
        idx: NO_SOURCE,
    };
    let padded_len = line.len() + 2 * pad;
    let get = |q: usize| {
        if q < pad || q >= pad + line.len() {
            pad_cand
        } else {
            line[q - pad]
        }
    };
    let mut per_residue: Vec<Vec<Cand<T>>> = Vec::with_capacity(dil);
    for r in 0..dil {
        let seq: Vec<Cand<T>> = (r..padded_len).step_by(dil).map(get).collect();
        per_residue.push(sliding_best(&seq, k, better));
    }
    (0..out_len)
        .map(|o| {
            let q0 = o * stride;
            per_residue[q0 % dil][q0 / dil]
        })
        .collect()
}

/// Max pooling over (optionally dilated) windows. Padding contributes `-inf`;
/// ties go to the lowest linear input index.
pub fn maxpool2d<T: Scalar>(input: &Tensor<T>, p: &ConvParams) -> Result<(Tensor<T>, ArgIndices)> {
    let xs = input.shape();
    let (oh, ow) = p.output_hw(xs.h, xs.w)?;
    let os = Shape::new(xs.n, xs.c, oh, ow);
    let mut indices = vec![NO_SOURCE; os.len()];
    let plane_out = os.plane();
    if plane_out > 0 {
        indices
            .par_chunks_mut(plane_out)
            .enumerate()
            .for_each(|(idx, dst)| {
                let (n, c) = (idx / xs.c, idx % xs.c);
                let src = input.plane(n, c);
                let base = input.offset(n, c, 0, 0);
                // Horizontal pass over every real row.
                let rows: Vec<Vec<Cand<T>>> = (0..xs.h)
                    .map(|y| {
                        let line: Vec<Cand<T>> = (0..xs.w)
                            .map(|x| Cand {
                                v: src[y * xs.w + x],
                                idx: base + y * xs.w + x,
                            })
                            .collect();
                        pool_line(&line, p.kernel_w, p.stride, p.pad, p.dilation, ow)
                    })
                    .collect();
                // Vertical pass over the column reductions.
                for ox in 0..ow {
                    let col: Vec<Cand<T>> = rows.iter().map(|r| r[ox]).collect();
                    let pooled = pool_line(&col, p.kernel_h, p.stride, p.pad, p.dilation, oh);
                    for (oy, c) in pooled.into_iter().enumerate() {
                        dst[oy * ow + ox] = c.idx;
                    }
                }
            });
    }
    let data = indices
        .iter()
        .map(|&i| if i == NO_SOURCE { T::neg_infinity() } else { input.data()[i] })
        .collect();
    Ok((
        Tensor::from_vec(os, data)?,
        ArgIndices {
            input_shape: xs,
            output_shape: os,
            indices,
        },
    ))
}

/// Routes each output gradient to the input element that won its window.
pub fn maxpool2d_backward<T: Scalar>(args: &ArgIndices, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    if grad_out.shape() != args.output_shape {
        return Err(Error::dim(
            "gradient",
            format!(
                "output gradient {} does not match pooled output {}",
                grad_out.shape(),
                args.output_shape
            ),
        ));
    }
    let mut grad_in = Tensor::zeros(args.input_shape)?;
    let dst = grad_in.data_mut();
    for (&i, &g) in args.indices.iter().zip(grad_out.data()) {
        if i != NO_SOURCE {
            dst[i] += g;
        }
    }
    Ok(grad_in)
}
