use crate::error::{Error, Result};
use crate::raster::{IgnoreMask, LabelImage};
use crate::tensor::{Scalar, Tensor};

/// Cross-entropy over the unmasked pixels of a batch.
#[derive(Debug, Clone)]
pub struct LossOutput<T> {
    /// Mean negative log-likelihood; 0 when nothing is counted.
    pub loss: T,
    pub grad: Tensor<T>,
    /// Unmasked pixels counted.
    pub counted: usize,
}

impl<T> LossOutput<T> {
    pub fn all_masked(&self) -> bool {
        self.counted == 0
    }
}

/// Smallest probability fed to the logarithm.
const PROB_FLOOR: f64 = 1e-12;

fn check_extents<T: Scalar>(probs: &Tensor<T>, labels: &[LabelImage], masks: &[IgnoreMask]) -> Result<()> {
    let s = probs.shape();
    if labels.len() != s.n || masks.len() != s.n {
        return Err(Error::dim(
            "batch",
            format!("{} probability maps, {} label images, {} masks", s.n, labels.len(), masks.len()),
        ));
    }
    for (l, m) in labels.iter().zip(masks) {
        if (l.height(), l.width()) != (s.h, s.w) || (m.height(), m.width()) != (s.h, s.w) {
            return Err(Error::dim(
                "extent",
                format!(
                    "probabilities are {}x{}, labels {}x{}, mask {}x{}",
                    s.h,
                    s.w,
                    l.height(),
                    l.width(),
                    m.height(),
                    m.width()
                ),
            ));
        }
    }
    Ok(())
}

/// Visits every unmasked pixel as `(n, y, x, label)`; labels must be below
/// the class count.
fn for_counted<T: Scalar>(
    probs: &Tensor<T>,
    labels: &[LabelImage],
    masks: &[IgnoreMask],
    mut f: impl FnMut(usize, usize, usize, usize),
) -> Result<usize> {
    check_extents(probs, labels, masks)?;
    let s = probs.shape();
    let mut counted = 0;
    for (n, (l, m)) in labels.iter().zip(masks).enumerate() {
        for y in 0..s.h {
            for x in 0..s.w {
                if m.get(y, x) {
                    continue;
                }
                let k = l.get(y, x) as usize;
                if k >= s.c {
                    return Err(Error::Data(format!("label {k} at ({y}, {x}) of item {n} is not below {} classes", s.c)));
                }
                f(n, y, x, k);
                counted += 1;
            }
        }
    }
    Ok(counted)
}

fn loss_sum<T: Scalar>(probs: &Tensor<T>, labels: &[LabelImage], masks: &[IgnoreMask]) -> Result<(T, usize)> {
    let floor = T::of(PROB_FLOOR);
    let mut total = T::zero();
    let counted = for_counted(probs, labels, masks, |n, y, x, k| {
        total += -probs.at(n, k, y, x).max(floor).ln();
    })?;
    Ok((total, counted))
}

/// Mean cross-entropy and its gradient with respect to the logits feeding
/// the softmax: `(p - onehot) / N` at unmasked pixels, zero elsewhere.
/// `denominator` overrides `N` when the batch is split across calls.
pub fn softmax_xent_loss<T: Scalar>(
    probs: &Tensor<T>,
    labels: &[LabelImage],
    masks: &[IgnoreMask],
    denominator: Option<usize>,
) -> Result<LossOutput<T>> {
    let (total, counted) = loss_sum(probs, labels, masks)?;
    let denom = denominator.unwrap_or(counted);
    let mut grad = Tensor::zeros(probs.shape())?;
    if denom == 0 {
        log::warn!("every pixel of the batch is masked; loss is 0");
        return Ok(LossOutput {
            loss: T::zero(),
            grad,
            counted,
        });
    }
    let inv = T::one() / T::of(denom as f64);
    let classes = probs.shape().c;
    for_counted(probs, labels, masks, |n, y, x, k| {
        for c in 0..classes {
            let onehot = if c == k { T::one() } else { T::zero() };
            grad.set(n, c, y, x, (probs.at(n, c, y, x) - onehot) * inv);
        }
    })?;
    Ok(LossOutput {
        loss: total * inv,
        grad,
        counted,
    })
}

/// Mean cross-entropy and its gradient with respect to the probabilities:
/// `-1 / (N q)` at the labelled class of each unmasked pixel. Used when the
/// probabilities were resampled after the softmax.
pub fn xent_prob_grad<T: Scalar>(
    probs: &Tensor<T>,
    labels: &[LabelImage],
    masks: &[IgnoreMask],
    denominator: Option<usize>,
) -> Result<LossOutput<T>> {
    let (total, counted) = loss_sum(probs, labels, masks)?;
    let denom = denominator.unwrap_or(counted);
    let mut grad = Tensor::zeros(probs.shape())?;
    if denom == 0 {
        log::warn!("every pixel of the batch is masked; loss is 0");
        return Ok(LossOutput {
            loss: T::zero(),
            grad,
            counted,
        });
    }
    let n_inv = T::one() / T::of(denom as f64);
    let floor = T::of(PROB_FLOOR);
    for_counted(probs, labels, masks, |n, y, x, k| {
        let q = probs.at(n, k, y, x);
        // The clamp is flat below the floor.
        let g = if q > floor { -n_inv / q } else { T::zero() };
        grad.set(n, k, y, x, g);
    })?;
    Ok(LossOutput {
        loss: total * n_inv,
        grad,
        counted,
    })
}
