use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::{Hash, Hasher};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::loss::{softmax_xent_loss, xent_prob_grad};
use super::sgd::{sgd_step, SgdState};
use crate::error::{Error, Result};
use crate::kernels::{bilinear_upsample, bilinear_upsample_backward};
use crate::net::{backward, forward, receptive_field, Inputs, LayerKind, LayerSpec, Mode, NetworkSpec, WeightStore};
use crate::raster::{IgnoreMask, LabelImage};
use crate::tensor::Scalar;

/// Iteration count of the full-scale reference schedule.
pub const REFERENCE_ITERATIONS: usize = 150_000;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Applied to every dropout layer.
    pub dropout: f64,
    /// Tiles per iteration.
    pub batch: usize,
    pub iterations: usize,
    /// The rate is divided by this factor from `lr_drop_fraction` of the run on.
    pub lr_drop_factor: f64,
    pub lr_drop_fraction: f64,
    pub init_sigma: f64,
    pub seed: u64,
    /// Loss curve sampling period in iterations.
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            momentum: 0.9,
            weight_decay: 0.0005,
            dropout: 0.5,
            batch: 2,
            iterations: 5000,
            lr_drop_factor: 10.0,
            lr_drop_fraction: 2.0 / 3.0,
            init_sigma: 0.01,
            seed: 0,
            log_every: 50,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Parameter(format!("train config: {what}")));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be finite and non-negative");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight decay must be finite and non-negative");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout ratio must lie in [0, 1)");
        }
        if !(self.lr_drop_factor >= 1.0) {
            return bad("learning-rate drop factor must be at least 1");
        }
        if !(self.lr_drop_fraction > 0.0 && self.lr_drop_fraction < 1.0) {
            return bad("learning-rate drop fraction must lie in (0, 1)");
        }
        if !(self.init_sigma > 0.0) {
            return bad("init sigma must be positive");
        }
        if self.batch == 0 || self.log_every == 0 {
            return bad("batch and log period must be at least 1");
        }
        Ok(())
    }

    /// First iteration run at the reduced rate, `ceil(fraction * iterations)`.
    pub fn drop_iteration(&self) -> usize {
        (self.lr_drop_fraction * self.iterations as f64 - 1e-9).ceil() as usize
    }

    pub fn lr_at(&self, iter: usize) -> f64 {
        if iter >= self.drop_iteration() {
            self.learning_rate / self.lr_drop_factor
        } else {
            self.learning_rate
        }
    }
}

/// One training sample: input tensors (batch 1) with full-resolution labels.
#[derive(Debug, Clone)]
pub struct TrainTile<T> {
    pub inputs: Inputs<T>,
    pub labels: LabelImage,
    pub mask: IgnoreMask,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub weights: WeightStore<T>,
    /// Loss of every iteration.
    pub losses: Vec<f64>,
    /// `(iteration, mean loss since the previous sample)`.
    pub curve: Vec<(usize, f64)>,
}

/// Copy of `net` with every dropout layer set to `ratio`.
pub fn with_dropout_ratio(net: &NetworkSpec, ratio: f64) -> Result<NetworkSpec> {
    let layers: Vec<LayerSpec> = net
        .layers()
        .iter()
        .map(|l| match l.kind {
            LayerKind::Dropout { .. } => LayerSpec {
                kind: LayerKind::Dropout { ratio },
                ..l.clone()
            },
            _ => l.clone(),
        })
        .collect();
    NetworkSpec::new(layers, net.classes())
}

fn softmax_head(net: &NetworkSpec) -> Result<(String, String)> {
    let out = net.output_layer();
    if !matches!(out.kind, LayerKind::Softmax) {
        return Err(Error::semantic(&out.name, "training needs a network that ends in softmax"));
    }
    let pre = net.layers()[net.preds(net.output())[0]].name.clone();
    Ok((out.name.clone(), pre))
}

fn mix_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut h = DefaultHasher::new();
    (seed, a, b).hash(&mut h);
    h.finish()
}

pub(crate) struct TilePass<T> {
    pub loss_sum: T,
    pub grads: Option<WeightStore<T>>,
    /// Hash of every relu sign pattern and pooling choice.
    pub structure: u64,
}

/// Forward (and optionally backward) of one tile. The returned loss is
/// divided by `denominator`, so summing over a batch gives the batch mean.
pub(crate) fn tile_pass<T: Scalar>(
    net: &NetworkSpec,
    w: &WeightStore<T>,
    tile: &TrainTile<T>,
    denominator: usize,
    mode: Mode,
    with_grad: bool,
) -> Result<TilePass<T>> {
    let (head, pre) = softmax_head(net)?;
    let stride = receptive_field(net)?.stride;
    let acts = forward(net, w, &tile.inputs, mode)?;
    let probs = acts.output();
    let labels = std::slice::from_ref(&tile.labels);
    let masks = std::slice::from_ref(&tile.mask);
    let covers = |h: usize, w: usize| {
        if (h, w) == (tile.labels.height(), tile.labels.width()) {
            Ok(())
        } else {
            Err(Error::Data(format!(
                "network output covers {h}x{w} but labels are {}x{}",
                tile.labels.height(),
                tile.labels.width()
            )))
        }
    };
    let ps = probs.shape();
    let mut upstream = HashMap::new();
    let loss = if stride == 1 {
        covers(ps.h, ps.w)?;
        let lo = softmax_xent_loss(probs, labels, masks, Some(denominator))?;
        upstream.insert(pre, lo.grad);
        lo.loss
    } else {
        covers(ps.h * stride, ps.w * stride)?;
        let up = bilinear_upsample(probs, stride)?;
        let lo = xent_prob_grad(&up, labels, masks, Some(denominator))?;
        upstream.insert(head, bilinear_upsample_backward(&lo.grad, ps, stride)?);
        lo.loss
    };

    let mut h = DefaultHasher::new();
    for (i, layer) in net.layers().iter().enumerate() {
        match layer.kind {
            LayerKind::Relu => {
                for v in acts.by_index(net.preds(i)[0]).data() {
                    (*v > T::zero()).hash(&mut h);
                }
            }
            LayerKind::Pool { .. } => {
                if let Some(args) = acts.pool_indices(i) {
                    args.indices.hash(&mut h);
                }
            }
            _ => {}
        }
    }
    let grads = if with_grad {
        Some(backward(net, w, &acts, &upstream)?.weights)
    } else {
        None
    };
    Ok(TilePass {
        loss_sum: loss,
        grads,
        structure: h.finish(),
    })
}

fn add_into<T: Scalar>(acc: &mut WeightStore<T>, g: &WeightStore<T>) {
    for ((_, a), (_, b)) in acc.iter_mut().zip(g.iter()) {
        for (x, &y) in a.kernel.data_mut().iter_mut().zip(b.kernel.data()) {
            *x += y;
        }
        for (x, &y) in a.bias.iter_mut().zip(&b.bias) {
            *x += y;
        }
    }
}

/// Mean loss over the unmasked pixels of `tiles` and its weight gradient.
/// Members run in parallel; gradients are summed in tile order.
pub fn batch_loss<T: Scalar>(
    net: &NetworkSpec,
    w: &WeightStore<T>,
    tiles: &[&TrainTile<T>],
    mode: Mode,
) -> Result<(T, WeightStore<T>)> {
    let denominator: usize = tiles
        .iter()
        .map(|t| t.mask.width() * t.mask.height() - t.mask.count())
        .sum();
    let passes: Vec<TilePass<T>> = tiles
        .par_iter()
        .enumerate()
        .map(|(i, t)| {
            let m = match mode {
                Mode::Test => Mode::Test,
                Mode::Train { seed } => Mode::Train {
                    seed: mix_seed(seed, i as u64, 0),
                },
            };
            tile_pass(net, w, t, denominator, m, true)
        })
        .collect::<Result<_>>()?;
    let mut grads = WeightStore::zeros_for(net)?;
    let mut loss = T::zero();
    for p in &passes {
        loss += p.loss_sum;
        add_into(&mut grads, p.grads.as_ref().expect("requested"));
    }
    Ok((loss, grads))
}

/// Minibatch SGD over `tiles`, reshuffled every epoch from `cfg.seed`.
/// `observer` sees each iteration's index, loss and updated weights.
pub fn train_loop<T: Scalar>(
    net: &NetworkSpec,
    init: WeightStore<T>,
    tiles: &[TrainTile<T>],
    cfg: &TrainConfig,
    mut observer: impl FnMut(usize, f64, &WeightStore<T>),
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    init.validate(net)?;
    if tiles.is_empty() {
        return Err(Error::Data("no training tiles".into()));
    }
    let net = with_dropout_ratio(net, cfg.dropout)?;
    let support = receptive_field(&net)?.support;
    for t in tiles {
        for (name, x) in &t.inputs {
            let s = x.shape();
            if s.h < support || s.w < support {
                return Err(Error::Data(format!(
                    "tile input `{name}` is {}x{}, smaller than the network support {support}",
                    s.h, s.w
                )));
            }
        }
    }
    let mut w = init;
    let mut state = SgdState::new(&w)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..tiles.len()).collect();
    let mut cursor = order.len();
    let mut losses = Vec::with_capacity(cfg.iterations);
    let mut curve = Vec::new();
    let mut window = 0.0;
    let mut window_len = 0usize;
    for iter in 0..cfg.iterations {
        let mut batch = Vec::with_capacity(cfg.batch);
        while batch.len() < cfg.batch {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch.push(&tiles[order[cursor]]);
            cursor += 1;
        }
        let mode = Mode::Train {
            seed: mix_seed(cfg.seed, iter as u64, 1),
        };
        let (loss, grads) = batch_loss(&net, &w, &batch, mode)?;
        sgd_step(&mut w, &grads, &mut state, cfg, iter)?;
        let loss = loss.as_f64();
        if !loss.is_finite() {
            return Err(Error::State(format!("loss diverged at iteration {iter}")));
        }
        losses.push(loss);
        window += loss;
        window_len += 1;
        if (iter + 1) % cfg.log_every == 0 || iter + 1 == cfg.iterations {
            let mean = window / window_len as f64;
            log::info!("iteration {} loss {mean:.5} lr {}", iter + 1, cfg.lr_at(iter));
            curve.push((iter + 1, mean));
            window = 0.0;
            window_len = 0;
        }
        observer(iter, loss, &w);
    }
    Ok(TrainOutcome {
        weights: w,
        losses,
        curve,
    })
}
