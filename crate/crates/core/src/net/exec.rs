use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layer::{LayerKind, NetworkSpec};
use super::weights::WeightStore;
use crate::error::{Error, Result};
use crate::kernels::{self, ArgIndices};
use crate::tensor::{Scalar, Tensor};

/// Input tensors keyed by input branch name.
pub type Inputs<T> = HashMap<String, Tensor<T>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Test,
    /// Dropout active; masks are drawn from a generator seeded with `seed`.
    Train { seed: u64 },
}

/// Every layer's output from one forward pass, plus what backward needs.
#[derive(Debug, Clone)]
pub struct Activations<T> {
    values: Vec<Tensor<T>>,
    pool_args: Vec<Option<ArgIndices>>,
    dropout_scale: Vec<Option<Vec<T>>>,
    output: usize,
    names: Vec<String>,
}

impl<T: Scalar> Activations<T> {
    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.names.iter().position(|n| n == name).map(|i| &self.values[i])
    }

    pub fn by_index(&self, i: usize) -> &Tensor<T> {
        &self.values[i]
    }

    pub(crate) fn pool_indices(&self, i: usize) -> Option<&ArgIndices> {
        self.pool_args[i].as_ref()
    }

    pub fn output(&self) -> &Tensor<T> {
        &self.values[self.output]
    }

    pub fn into_output(mut self) -> Tensor<T> {
        self.values.swap_remove(self.output)
    }

    /// `(name, activation)` pairs in network order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    /// Forgets the cached state of layer `name`; used to exercise the
    /// missing-cache error path.
    pub fn drop_cache(&mut self, name: &str) {
        if let Some(i) = self.names.iter().position(|n| n == name) {
            self.pool_args[i] = None;
            self.dropout_scale[i] = None;
        }
    }
}

fn weights_for<'a, T: Scalar>(w: &'a WeightStore<T>, name: &str) -> Result<&'a super::ConvWeights<T>> {
    w.get(name)
        .ok_or_else(|| Error::semantic(name, "no weights stored for this layer"))
}

fn dropout_rng(seed: u64, layer: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (layer as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Runs the network over all layers in order.
pub fn forward<T: Scalar>(net: &NetworkSpec, w: &WeightStore<T>, inputs: &Inputs<T>, mode: Mode) -> Result<Activations<T>> {
    let n_layers = net.len();
    let mut values: Vec<Tensor<T>> = Vec::with_capacity(n_layers);
    let mut pool_args = vec![None; n_layers];
    let mut dropout_scale = vec![None; n_layers];
    let mut batch = None;
    for (i, layer) in net.layers().iter().enumerate() {
        let preds = net.preds(i);
        let at = |e: Error| Error::semantic(&layer.name, e.to_string());
        let out = match &layer.kind {
            LayerKind::Input { channels } => {
                let x = inputs
                    .get(&layer.name)
                    .ok_or_else(|| Error::semantic(&layer.name, "no tensor supplied for this input"))?;
                if x.shape().c != *channels {
                    return Err(Error::dim(
                        "channels",
                        format!("input `{}` declares {channels} channels, got {}", layer.name, x.shape().c),
                    ));
                }
                match batch {
                    None => batch = Some(x.shape().n),
                    Some(b) if b != x.shape().n => {
                        return Err(Error::dim("batch", format!("input `{}` has batch {}", layer.name, x.shape().n)))
                    }
                    _ => {}
                }
                x.clone()
            }
            LayerKind::Conv { geom, .. } => {
                let cw = weights_for(w, &layer.name)?;
                kernels::conv2d(&values[preds[0]], &cw.kernel, &cw.bias, geom).map_err(at)?
            }
            LayerKind::Pool { geom } => {
                let (y, args) = kernels::maxpool2d(&values[preds[0]], geom).map_err(at)?;
                pool_args[i] = Some(args);
                y
            }
            LayerKind::Relu => kernels::relu(&values[preds[0]]),
            LayerKind::Dropout { ratio } => match mode {
                Mode::Test => values[preds[0]].clone(),
                Mode::Train { seed } => {
                    let x = &values[preds[0]];
                    let keep = 1.0 - ratio;
                    let scale = T::of(1.0 / keep);
                    let mut rng = dropout_rng(seed, i);
                    let mask: Vec<T> = (0..x.data().len())
                        .map(|_| if rng.gen::<f64>() < keep { scale } else { T::zero() })
                        .collect();
                    let mut y = x.clone();
                    for (v, &m) in y.data_mut().iter_mut().zip(&mask) {
                        *v = *v * m;
                    }
                    dropout_scale[i] = Some(mask);
                    y
                }
            },
            LayerKind::Softmax => kernels::softmax_channels(&values[preds[0]]),
            LayerKind::Upsample { factor } => kernels::bilinear_upsample(&values[preds[0]], *factor).map_err(at)?,
            LayerKind::Concat => kernels::concat_channels(&values[preds[0]], &values[preds[1]]).map_err(at)?,
        };
        values.push(out);
    }
    Ok(Activations {
        values,
        pool_args,
        dropout_scale,
        output: net.output(),
        names: net.layers().iter().map(|l| l.name.clone()).collect(),
    })
}

/// Forward pass of a single-input network.
pub fn forward_single<T: Scalar>(net: &NetworkSpec, w: &WeightStore<T>, x: &Tensor<T>, mode: Mode) -> Result<Activations<T>> {
    let branches = net.input_branches();
    if branches.len() != 1 {
        return Err(Error::Parameter(format!(
            "network has {} input branches; supply them by name",
            branches.len()
        )));
    }
    let mut inputs = HashMap::new();
    inputs.insert(branches[0].0.to_string(), x.clone());
    forward(net, w, &inputs, mode)
}

#[derive(Debug, Clone)]
pub struct Gradients<T> {
    pub weights: WeightStore<T>,
    /// Gradient with respect to each input branch.
    pub inputs: HashMap<String, Tensor<T>>,
}

fn accumulate<T: Scalar>(slot: &mut Option<Tensor<T>>, g: Tensor<T>) -> Result<()> {
    match slot {
        Some(acc) => acc.add_assign(&g),
        None => {
            *slot = Some(g);
            Ok(())
        }
    }
}

/// Reverse-mode gradients. `upstream` holds dL/d(output) for any subset of
/// layers, keyed by layer name; layers without a path to a seeded gradient
/// contribute zero.
pub fn backward<T: Scalar>(
    net: &NetworkSpec,
    w: &WeightStore<T>,
    acts: &Activations<T>,
    upstream: &HashMap<String, Tensor<T>>,
) -> Result<Gradients<T>> {
    if acts.values.len() != net.len() || acts.names.iter().zip(net.layers()).any(|(a, l)| *a != l.name) {
        return Err(Error::State("activations were not produced by this network".into()));
    }
    let mut grads: Vec<Option<Tensor<T>>> = vec![None; net.len()];
    for (name, g) in upstream {
        let i = net
            .index_of(name)
            .ok_or_else(|| Error::semantic(name, "gradient supplied for an unknown layer"))?;
        if g.shape() != acts.values[i].shape() {
            return Err(Error::dim(
                "gradient",
                format!("layer `{name}` output is {} but gradient is {}", acts.values[i].shape(), g.shape()),
            ));
        }
        accumulate(&mut grads[i], g.clone())?;
    }
    let mut wgrads = WeightStore::zeros_for(net)?;
    let mut input_grads = HashMap::new();

    for i in (0..net.len()).rev() {
        let Some(g) = grads[i].take() else { continue };
        let layer = &net.layers()[i];
        let preds = net.preds(i);
        match &layer.kind {
            LayerKind::Input { .. } => {
                input_grads.insert(layer.name.clone(), g);
            }
            LayerKind::Conv { geom, .. } => {
                let cw = weights_for(w, &layer.name)?;
                let cg = kernels::conv2d_backward(&acts.values[preds[0]], &cw.kernel, geom, &g)?;
                let slot = wgrads.get_mut(&layer.name).expect("zeros_for covers every conv");
                slot.kernel = cg.kernels;
                slot.bias = cg.bias;
                accumulate(&mut grads[preds[0]], cg.input)?;
            }
            LayerKind::Pool { .. } => {
                let args = acts.pool_args[i]
                    .as_ref()
                    .ok_or_else(|| Error::State(format!("no pooling indices cached for `{}`", layer.name)))?;
                accumulate(&mut grads[preds[0]], kernels::maxpool2d_backward(args, &g)?)?;
            }
            LayerKind::Relu => {
                accumulate(&mut grads[preds[0]], kernels::relu_backward(&acts.values[preds[0]], &g)?)?;
            }
            LayerKind::Dropout { .. } => {
                let mut gi = g;
                if let Some(mask) = &acts.dropout_scale[i] {
                    for (v, &m) in gi.data_mut().iter_mut().zip(mask) {
                        *v = *v * m;
                    }
                }
                accumulate(&mut grads[preds[0]], gi)?;
            }
            LayerKind::Softmax => {
                accumulate(&mut grads[preds[0]], kernels::softmax_backward(&acts.values[i], &g)?)?;
            }
            LayerKind::Upsample { factor } => {
                let gi = kernels::bilinear_upsample_backward(&g, acts.values[preds[0]].shape(), *factor)?;
                accumulate(&mut grads[preds[0]], gi)?;
            }
            LayerKind::Concat => {
                let (ga, gb) = kernels::split_channels(&g, acts.values[preds[0]].shape().c)?;
                accumulate(&mut grads[preds[0]], ga)?;
                accumulate(&mut grads[preds[1]], gb)?;
            }
        }
    }
    Ok(Gradients {
        weights: wgrads,
        inputs: input_grads,
    })
}
