use crate::error::{Error, Result};
use crate::tensor::{Scalar, Shape, Tensor};

/// Stacks `b`'s channels after `a`'s.
pub fn concat_channels<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa.n != sb.n {
        return Err(Error::dim("batch", format!("{} vs {}", sa.n, sb.n)));
    }
    if sa.h != sb.h {
        return Err(Error::dim("height", format!("{} vs {}", sa.h, sb.h)));
    }
    if sa.w != sb.w {
        return Err(Error::dim("width", format!("{} vs {}", sa.w, sb.w)));
    }
    let plane = sa.plane();
    let mut data = Vec::with_capacity(sa.len() + sb.len());
    for n in 0..sa.n {
        data.extend_from_slice(&a.data()[n * sa.c * plane..(n + 1) * sa.c * plane]);
        data.extend_from_slice(&b.data()[n * sb.c * plane..(n + 1) * sb.c * plane]);
    }
    Tensor::from_vec(Shape::new(sa.n, sa.c + sb.c, sa.h, sa.w), data)
}

/// Inverse of [`concat_channels`]: the first `split` channels and the rest.
pub fn split_channels<T: Scalar>(t: &Tensor<T>, split: usize) -> Result<(Tensor<T>, Tensor<T>)> {
    let c = t.shape().c;
    if split > c {
        return Err(Error::dim("channels", format!("split at {split} of {c}")));
    }
    Ok((t.channels(0, split)?, t.channels(split, c - split)?))
}
