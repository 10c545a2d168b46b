use super::train::TrainConfig;
use crate::error::{Error, Result};
use crate::net::WeightStore;
use crate::tensor::Scalar;

/// Momentum buffers, one per parameter.
#[derive(Debug, Clone)]
pub struct SgdState<T> {
    pub velocity: WeightStore<T>,
}

impl<T: Scalar> SgdState<T> {
    pub fn new(w: &WeightStore<T>) -> Result<Self> {
        Ok(SgdState {
            velocity: w.zeros_like()?,
        })
    }
}

/// `v <- mu v - lr(iter) (g + wd w)`, then `w <- w + v`.
pub fn sgd_step<T: Scalar>(
    w: &mut WeightStore<T>,
    g: &WeightStore<T>,
    state: &mut SgdState<T>,
    cfg: &TrainConfig,
    iter: usize,
) -> Result<()> {
    let lr = T::of(cfg.lr_at(iter));
    let mu = T::of(cfg.momentum);
    let wd = T::of(cfg.weight_decay);
    if w.len() != g.len() || w.len() != state.velocity.len() {
        return Err(Error::dim("weights", "weights, gradients and velocity hold different layers"));
    }
    for ((name, wl), (gl, vl)) in w.iter_mut().zip(g.iter().zip(state.velocity.iter_mut())) {
        if gl.0 != name || vl.0 != name || wl.kernel.shape() != gl.1.kernel.shape() || wl.bias.len() != gl.1.bias.len() {
            return Err(Error::dim("weights", format!("gradient for `{name}` does not match the weights")));
        }
        let wk = wl.kernel.data_mut().iter_mut().chain(wl.bias.iter_mut());
        let gk = gl.1.kernel.data().iter().chain(&gl.1.bias);
        let vk = vl.1.kernel.data_mut().iter_mut().chain(vl.1.bias.iter_mut());
        for ((wv, &gv), vv) in wk.zip(gk).zip(vk) {
            *vv = mu * *vv - lr * (gv + wd * *wv);
            *wv += *vv;
        }
    }
    Ok(())
}
