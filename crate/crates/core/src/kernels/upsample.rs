use crate::error::{Error, Result};
use crate::tensor::{Scalar, Shape, Tensor};

/// Interpolation taps for one output coordinate.
#[derive(Debug, Clone, Copy)]
struct Tap {
    lo: usize,
    hi: usize,
    frac: f64,
}

// Half-pixel centres: source = (i + 0.5)/factor - 0.5, clamped to [0, n-1].
fn taps(n: usize, factor: usize) -> Vec<Tap> {
    let last = (n - 1) as f64;
    (0..n * factor)
        .map(|i| {
            let src = ((i as f64 + 0.5) / factor as f64 - 0.5).clamp(0.0, last);
            let lo = src.floor() as usize;
            Tap {
                lo,
                hi: (lo + 1).min(n - 1),
                frac: src - lo as f64,
            }
        })
        .collect()
}

fn check_factor(factor: usize) -> Result<()> {
    if factor == 0 {
        return Err(Error::Parameter("upsampling factor must be at least 1".into()));
    }
    Ok(())
}

pub fn bilinear_upsample<T: Scalar>(input: &Tensor<T>, factor: usize) -> Result<Tensor<T>> {
    check_factor(factor)?;
    if factor == 1 {
        return Ok(input.clone());
    }
    let s = input.shape();
    let (ty, tx) = (taps(s.h, factor), taps(s.w, factor));
    let one = T::one();
    Tensor::from_fn(Shape::new(s.n, s.c, s.h * factor, s.w * factor), |n, c, y, x| {
        let (a, b) = (ty[y], tx[x]);
        let (fy, fx) = (T::of(a.frac), T::of(b.frac));
        let top = (one - fx) * input.at(n, c, a.lo, b.lo) + fx * input.at(n, c, a.lo, b.hi);
        let bottom = (one - fx) * input.at(n, c, a.hi, b.lo) + fx * input.at(n, c, a.hi, b.hi);
        (one - fy) * top + fy * bottom
    })
}

/// Transpose of [`bilinear_upsample`]: scatters each output gradient back
/// onto its four source samples with the forward weights.
pub fn bilinear_upsample_backward<T: Scalar>(grad_out: &Tensor<T>, input_shape: Shape, factor: usize) -> Result<Tensor<T>> {
    check_factor(factor)?;
    let s = input_shape;
    let expect = Shape::new(s.n, s.c, s.h * factor, s.w * factor);
    if grad_out.shape() != expect {
        return Err(Error::dim(
            "gradient",
            format!("upsample gradient {} expected {}", grad_out.shape(), expect),
        ));
    }
    if factor == 1 {
        return Ok(grad_out.clone());
    }
    let (ty, tx) = (taps(s.h, factor), taps(s.w, factor));
    let one = T::one();
    let mut g = Tensor::zeros(s)?;
    for n in 0..s.n {
        for c in 0..s.c {
            for (y, a) in ty.iter().enumerate() {
                let fy = T::of(a.frac);
                for (x, b) in tx.iter().enumerate() {
                    let fx = T::of(b.frac);
                    let v = grad_out.at(n, c, y, x);
                    let dst = g.plane_mut(n, c);
                    dst[a.lo * s.w + b.lo] += (one - fy) * (one - fx) * v;
                    dst[a.lo * s.w + b.hi] += (one - fy) * fx * v;
                    dst[a.hi * s.w + b.lo] += fy * (one - fx) * v;
                    dst[a.hi * s.w + b.hi] += fy * fx * v;
                }
            }
        }
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factor_one_is_identity() {
        let x = Tensor::<f32>::from_fn(Shape::new(1, 2, 3, 4), |_, c, y, x| (c + y * x) as f32).unwrap();
        assert_eq!(bilinear_upsample(&x, 1).unwrap(), x);
    }

    #[test]
    fn zero_factor_rejected() {
        let x = Tensor::<f32>::zeros(Shape::new(1, 1, 2, 2)).unwrap();
        assert_eq!(bilinear_upsample(&x, 0).unwrap_err().kind(), "parameter");
    }

    #[test]
    fn constant_preserved_and_subsample_recovers() {
        let x = Tensor::<f32>::full(Shape::new(1, 3, 5, 4), 0.3).unwrap();
        for f in [2, 3, 4, 16] {
            let up = bilinear_upsample(&x, f).unwrap();
            assert!(up.data().iter().all(|&v| (v - 0.3).abs() < 1e-7));
            let back = Tensor::from_fn(x.shape(), |n, c, y, xx| up.at(n, c, y * f, xx * f)).unwrap();
            assert!(back.max_abs_diff(&x).unwrap() < 1e-7);
        }
    }
}
