use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

pub fn relu<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|v| v.max(T::zero()))
}

/// Gradient of [`relu`], passing `grad_out` where the forward input was
/// positive.
pub fn relu_backward<T: Scalar>(input: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    if input.shape() != grad_out.shape() {
        return Err(Error::dim("gradient", "relu gradient shape differs from its input"));
    }
    let mut g = grad_out.clone();
    for (gv, &x) in g.data_mut().iter_mut().zip(input.data()) {
        if x <= T::zero() {
            *gv = T::zero();
        }
    }
    Ok(g)
}

/// Per-pixel softmax across the channel axis, stabilised by subtracting the
/// channel maximum.
pub fn softmax_channels<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    let s = input.shape();
    let plane = s.plane();
    let mut out = input.clone();
    if s.c == 0 {
        return out;
    }
    let data = out.data_mut();
    for n in 0..s.n {
        let base = n * s.c * plane;
        for i in 0..plane {
            let at = |c: usize| base + c * plane + i;
            let mut m = T::neg_infinity();
            for c in 0..s.c {
                m = m.max(data[at(c)]);
            }
            let mut sum = T::zero();
            for c in 0..s.c {
                let e = (data[at(c)] - m).exp();
                data[at(c)] = e;
                sum += e;
            }
            for c in 0..s.c {
                data[at(c)] = data[at(c)] / sum;
            }
        }
    }
    out
}

/// Vector-Jacobian product of the channel softmax:
/// `dz = p * (g - sum_c g*p)`.
pub fn softmax_backward<T: Scalar>(probs: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    if probs.shape() != grad_out.shape() {
        return Err(Error::dim("gradient", "softmax gradient shape differs from its output"));
    }
    let s = probs.shape();
    let plane = s.plane();
    let mut out = grad_out.clone();
    let (p, g) = (probs.data(), grad_out.data());
    let dst = out.data_mut();
    for n in 0..s.n {
        let base = n * s.c * plane;
        for i in 0..plane {
            let mut dot = T::zero();
            for c in 0..s.c {
                let k = base + c * plane + i;
                dot += g[k] * p[k];
            }
            for c in 0..s.c {
                let k = base + c * plane + i;
                dst[k] = p[k] * (g[k] - dot);
            }
        }
    }
    Ok(out)
}
