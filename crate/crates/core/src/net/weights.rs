use indexmap::IndexMap;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::layer::{LayerKind, NetworkSpec};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Shape, Tensor};

/// Standard deviation of the Gaussian weight initialisation.
pub const DEFAULT_INIT_SIGMA: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct ConvWeights<T = f32> {
    /// `[out_channels, in_channels, kernel_h, kernel_w]`.
    pub kernel: Tensor<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> ConvWeights<T> {
    pub fn zeros(shape: Shape) -> Result<Self> {
        Ok(ConvWeights {
            kernel: Tensor::zeros(shape)?,
            bias: vec![T::zero(); shape.n],
        })
    }

    pub fn len(&self) -> usize {
        self.kernel.data().len() + self.bias.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Per-layer convolution parameters keyed by layer name, in network order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WeightStore<T = f32> {
    entries: IndexMap<String, ConvWeights<T>>,
}

fn expected_shape(net: &NetworkSpec, i: usize) -> Option<Shape> {
    match &net.layers()[i].kind {
        LayerKind::Conv { geom, out_channels } => Some(Shape::new(
            *out_channels,
            net.in_channels(i),
            geom.kernel_h,
            geom.kernel_w,
        )),
        _ => None,
    }
}

impl<T: Scalar> WeightStore<T> {
    pub fn new() -> Self {
        WeightStore {
            entries: IndexMap::new(),
        }
    }

    /// Kernels drawn from `Normal(0, sigma)`, biases zero.
    pub fn init(net: &NetworkSpec, sigma: f64, seed: u64) -> Result<Self> {
        let normal = Normal::new(0.0, sigma).map_err(|e| Error::Parameter(format!("init sigma: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = WeightStore::new();
        for (i, layer) in net.conv_layers() {
            let shape = expected_shape(net, i).expect("conv layer");
            let kernel = Tensor::from_fn(shape, |_, _, _, _| T::of(normal.sample(&mut rng)))?;
            store.insert(
                layer.name.clone(),
                ConvWeights {
                    kernel,
                    bias: vec![T::zero(); shape.n],
                },
            );
        }
        Ok(store)
    }

    /// Zero-valued store with the shapes `net` expects.
    pub fn zeros_for(net: &NetworkSpec) -> Result<Self> {
        let mut store = WeightStore::new();
        for (i, layer) in net.conv_layers() {
            store.insert(layer.name.clone(), ConvWeights::zeros(expected_shape(net, i).expect("conv"))?);
        }
        Ok(store)
    }

    pub fn zeros_like(&self) -> Result<Self> {
        let mut store = WeightStore::new();
        for (name, w) in &self.entries {
            store.insert(name.clone(), ConvWeights::zeros(w.kernel.shape())?);
        }
        Ok(store)
    }

    pub fn insert(&mut self, name: String, w: ConvWeights<T>) {
        self.entries.insert(name, w);
    }

    pub fn get(&self, name: &str) -> Option<&ConvWeights<T>> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut ConvWeights<T>> {
        self.entries.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ConvWeights<T>)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut ConvWeights<T>)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn param_count(&self) -> usize {
        self.entries.values().map(ConvWeights::len).sum()
    }

    /// All parameters flattened in store order, kernel before bias.
    pub fn flatten(&self) -> Vec<T> {
        let mut v = Vec::with_capacity(self.param_count());
        for w in self.entries.values() {
            v.extend_from_slice(w.kernel.data());
            v.extend_from_slice(&w.bias);
        }
        v
    }

    /// Mutable access to parameter `k` of the [`flatten`](Self::flatten) order.
    pub fn param_mut(&mut self, mut k: usize) -> Option<&mut T> {
        for w in self.entries.values_mut() {
            let nk = w.kernel.data().len();
            if k < nk {
                return Some(&mut w.kernel.data_mut()[k]);
            }
            k -= nk;
            if k < w.bias.len() {
                return Some(&mut w.bias[k]);
            }
            k -= w.bias.len();
        }
        None
    }

    pub fn cast<U: Scalar>(&self) -> WeightStore<U> {
        let mut store = WeightStore::new();
        for (name, w) in &self.entries {
            store.insert(
                name.clone(),
                ConvWeights {
                    kernel: w.kernel.cast(),
                    bias: w.bias.iter().map(|b| U::of(b.as_f64())).collect(),
                },
            );
        }
        store
    }

    /// Every conv layer of `net` has exactly one entry of the right shape and
    /// there are no other entries.
    pub fn validate(&self, net: &NetworkSpec) -> Result<()> {
        for (i, layer) in net.conv_layers() {
            let want = expected_shape(net, i).expect("conv");
            let w = self
                .entries
                .get(&layer.name)
                .ok_or_else(|| Error::semantic(&layer.name, "no weights stored for this layer"))?;
            if w.kernel.shape() != want {
                return Err(Error::semantic(
                    &layer.name,
                    format!("stored kernel is {} but the network expects {}", w.kernel.shape(), want),
                ));
            }
            if w.bias.len() != want.n {
                return Err(Error::semantic(
                    &layer.name,
                    format!("stored {} biases but the network expects {}", w.bias.len(), want.n),
                ));
            }
        }
        if let Some(extra) = self.entries.keys().find(|k| {
            !net.layer(k)
                .is_some_and(|l| matches!(l.kind, LayerKind::Conv { .. }))
        }) {
            return Err(Error::semantic(extra, "weights stored for a layer that is not a conv layer"));
        }
        Ok(())
    }
}
