use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Shape, Tensor};

/// Window geometry shared by convolution and pooling layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ConvParams {
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    /// Symmetric padding on every side.
    pub pad: usize,
    /// Tap spacing; 1 is a dense kernel.
    pub dilation: usize,
}

impl ConvParams {
    pub const fn square(kernel: usize, stride: usize, pad: usize, dilation: usize) -> Self {
        ConvParams {
            kernel_h: kernel,
            kernel_w: kernel,
            stride,
            pad,
            dilation,
        }
    }

    pub const fn extent_h(&self) -> usize {
        self.dilation * (self.kernel_h - 1) + 1
    }

    pub const fn extent_w(&self) -> usize {
        self.dilation * (self.kernel_w - 1) + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel_h == 0 || self.kernel_w == 0 {
            return Err(Error::Parameter("kernel extent must be at least 1".into()));
        }
        if self.stride == 0 {
            return Err(Error::Parameter("stride must be at least 1".into()));
        }
        if self.dilation == 0 {
            return Err(Error::Parameter("dilation must be at least 1".into()));
        }
        Ok(())
    }

    /// Output extent along one axis, `floor((X + 2p - d(k-1) - 1)/s) + 1`.
    pub fn output_len(&self, axis: &'static str, input: usize, kernel: usize) -> Result<usize> {
        let extent = self.dilation * (kernel - 1) + 1;
        let padded = input + 2 * self.pad;
        if padded < extent {
            return Err(Error::dim(
                axis,
                format!("padded extent {padded} is smaller than window extent {extent}"),
            ));
        }
        Ok((padded - extent) / self.stride + 1)
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        self.validate()?;
        Ok((
            self.output_len("height", h, self.kernel_h)?,
            self.output_len("width", w, self.kernel_w)?,
        ))
    }
}

/// Range of output positions `o < out_len` whose tap `o*stride + offset` lands
/// inside `[0, len)`.
#[inline]
pub(crate) fn valid_span(offset: isize, stride: usize, len: usize, out_len: usize) -> (usize, usize) {
    let s = stride as isize;
    let lo = if offset >= 0 { 0 } else { ((-offset) + s - 1) / s };
    let last = len as isize - 1 - offset;
    if last < 0 {
        return (0, 0);
    }
    let hi = (last / s + 1).min(out_len as isize);
    let lo = lo.min(hi);
    (lo as usize, hi as usize)
}

fn check_conv<T: Scalar>(input: &Tensor<T>, kernels: &Tensor<T>, p: &ConvParams) -> Result<(Shape, Shape)> {
    let xs = input.shape();
    let ks = kernels.shape();
    if ks.c != xs.c {
        return Err(Error::dim(
            "channels",
            format!("kernel expects {} input channels, input has {}", ks.c, xs.c),
        ));
    }
    if ks.h != p.kernel_h || ks.w != p.kernel_w {
        return Err(Error::dim(
            "kernel",
            format!(
                "kernel tensor is {}x{} but geometry says {}x{}",
                ks.h, ks.w, p.kernel_h, p.kernel_w
            ),
        ));
    }
    let (oh, ow) = p.output_hw(xs.h, xs.w)?;
    Ok((xs, Shape::new(xs.n, ks.n, oh, ow)))
}

/// Dilated 2-D cross-correlation. Out-of-image taps read zero.
///
/// Each output element accumulates its products in the order input channel,
/// kernel row, kernel column, then adds the bias. The dilated and
/// zero-interleaved forms of the same kernel therefore produce identical bits.
pub fn conv2d<T: Scalar>(input: &Tensor<T>, kernels: &Tensor<T>, bias: &[T], p: &ConvParams) -> Result<Tensor<T>> {
    let (xs, os) = check_conv(input, kernels, p)?;
    if bias.len() != os.c {
        return Err(Error::dim(
            "bias",
            format!("{} biases for {} output channels", bias.len(), os.c),
        ));
    }
    let mut out = Tensor::zeros(os)?;
    let plane = os.plane();
    if plane == 0 || os.c == 0 {
        return Ok(out);
    }
    let (kh, kw) = (p.kernel_h, p.kernel_w);
    let (stride, dil, pad) = (p.stride, p.dilation as isize, p.pad as isize);
    out.data_mut()
        .par_chunks_mut(plane)
        .enumerate()
        .for_each(|(idx, dst)| {
            let (n, co) = (idx / os.c, idx % os.c);
            for ci in 0..xs.c {
                let src = input.plane(n, ci);
                for ky in 0..kh {
                    let off_y = ky as isize * dil - pad;
                    let (y_lo, y_hi) = valid_span(off_y, stride, xs.h, os.h);
                    for kx in 0..kw {
                        let wv = kernels.at(co, ci, ky, kx);
                        let off_x = kx as isize * dil - pad;
                        let (x_lo, x_hi) = valid_span(off_x, stride, xs.w, os.w);
                        for oy in y_lo..y_hi {
                            let iy = (oy * stride) as isize + off_y;
                            let row = &src[iy as usize * xs.w..(iy as usize + 1) * xs.w];
                            let drow = &mut dst[oy * os.w..(oy + 1) * os.w];
                            for ox in x_lo..x_hi {
                                let ix = ((ox * stride) as isize + off_x) as usize;
                                drow[ox] += wv * row[ix];
                            }
                        }
                    }
                }
            }
            let b = bias[co];
            for v in dst.iter_mut() {
                *v += b;
            }
        });
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct ConvGrads<T> {
    pub input: Tensor<T>,
    pub kernels: Tensor<T>,
    pub bias: Vec<T>,
}

/// Reverse-mode gradients of [`conv2d`] given the gradient of its output.
pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    kernels: &Tensor<T>,
    p: &ConvParams,
    grad_out: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    let (xs, os) = check_conv(input, kernels, p)?;
    if grad_out.shape() != os {
        return Err(Error::dim(
            "gradient",
            format!("output gradient {} does not match output {}", grad_out.shape(), os),
        ));
    }
    let ks = kernels.shape();
    let (stride, dil, pad) = (p.stride, p.dilation as isize, p.pad as isize);

    let mut grad_in = Tensor::zeros(xs)?;
    if xs.c > 0 {
        grad_in
            .data_mut()
            .par_chunks_mut(xs.plane())
            .enumerate()
            .for_each(|(idx, dst)| {
                let (n, ci) = (idx / xs.c, idx % xs.c);
                for co in 0..os.c {
                    let g = grad_out.plane(n, co);
                    for ky in 0..ks.h {
                        let off_y = ky as isize * dil - pad;
                        let (y_lo, y_hi) = valid_span(off_y, stride, xs.h, os.h);
                        for kx in 0..ks.w {
                            let wv = kernels.at(co, ci, ky, kx);
                            let off_x = kx as isize * dil - pad;
                            let (x_lo, x_hi) = valid_span(off_x, stride, xs.w, os.w);
                            for oy in y_lo..y_hi {
                                let iy = ((oy * stride) as isize + off_y) as usize;
                                for ox in x_lo..x_hi {
                                    let ix = ((ox * stride) as isize + off_x) as usize;
                                    dst[iy * xs.w + ix] += wv * g[oy * os.w + ox];
                                }
                            }
                        }
                    }
                }
            });
    }

    let mut grad_k = Tensor::zeros(ks)?;
    let per_out = ks.c * ks.h * ks.w;
    if per_out > 0 {
        grad_k
            .data_mut()
            .par_chunks_mut(per_out)
            .enumerate()
            .for_each(|(co, dst)| {
                for n in 0..xs.n {
                    let g = grad_out.plane(n, co);
                    for ci in 0..xs.c {
                        let src = input.plane(n, ci);
                        for ky in 0..ks.h {
                            let off_y = ky as isize * dil - pad;
                            let (y_lo, y_hi) = valid_span(off_y, stride, xs.h, os.h);
                            for kx in 0..ks.w {
                                let off_x = kx as isize * dil - pad;
                                let (x_lo, x_hi) = valid_span(off_x, stride, xs.w, os.w);
                                let mut acc = T::zero();
                                for oy in y_lo..y_hi {
                                    let iy = ((oy * stride) as isize + off_y) as usize;
                                    for ox in x_lo..x_hi {
                                        let ix = ((ox * stride) as isize + off_x) as usize;
                                        acc += g[oy * os.w + ox] * src[iy * xs.w + ix];
                                    }
                                }
                                dst[(ci * ks.h + ky) * ks.w + kx] += acc;
                            }
                        }
                    }
                }
            });
    }

    let bias = (0..os.c)
        .map(|co| (0..os.n).map(|n| grad_out.plane(n, co).iter().copied().sum::<T>()).sum())
        .collect();

    Ok(ConvGrads {
        input: grad_in,
        kernels: grad_k,
        bias,
    })
}
