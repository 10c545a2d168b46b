use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::kernels::{softmax_channels, ConvParams};
use crate::net::{forward, infer_shapes, ConvWeights, Inputs, LayerSpec, Mode, NetworkSpec, WeightStore};
use crate::tensor::{Scalar, Shape, Tensor};

/// A patch classifier: a convolutional trunk followed by flatten and a stack
/// of dense layers with ReLU between them and softmax after the last one.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierSpec {
    pub trunk: NetworkSpec,
    /// Patch size the classifier was trained on; fixes the trunk's output
    /// extent `h_c x w_c`.
    pub input_size: Option<(usize, usize)>,
    /// Output width of each dense layer.
    pub fc_dims: Vec<usize>,
}

/// Row-major `outputs x inputs` matrix. Inputs index the flattened trunk
/// output in `(channel, y, x)` order.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseWeights<T = f32> {
    pub outputs: usize,
    pub inputs: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

fn fc_name(i: usize) -> String {
    format!("fc{}", i + 1)
}

fn trunk_extent(cls: &ClassifierSpec) -> Result<(usize, usize, usize)> {
    let trunk = &cls.trunk;
    let out = trunk.output_layer();
    let (h, w) = cls
        .input_size
        .ok_or_else(|| Error::semantic(&out.name, "last conv extent is unknown without a training patch size"))?;
    let inputs: HashMap<String, (usize, usize)> = trunk
        .input_branches()
        .into_iter()
        .map(|(name, _)| (name.to_string(), (h, w)))
        .collect();
    let shapes = infer_shapes(trunk, &inputs)?;
    let s = shapes[trunk.output()];
    Ok((s.c, s.h, s.w))
}

/// Filter form of a classifier: the first dense layer becomes an
/// `h_c x w_c` conv over the trunk output, later ones become 1x1 convs.
/// Without dense layers the trunk is returned unchanged.
pub fn classifier_to_filter(cls: &ClassifierSpec) -> Result<NetworkSpec> {
    if cls.fc_dims.is_empty() {
        return Ok(cls.trunk.clone());
    }
    if cls.trunk.has_softmax() {
        return Err(Error::semantic(&cls.trunk.output_layer().name, "trunk already ends in softmax"));
    }
    let (_, hc, wc) = trunk_extent(cls)?;
    let mut layers = cls.trunk.layers().to_vec();
    let mut prev = cls.trunk.output_layer().name.clone();
    for (i, &dim) in cls.fc_dims.iter().enumerate() {
        let name = fc_name(i);
        let geom = if i == 0 {
            ConvParams {
                kernel_h: hc,
                kernel_w: wc,
                stride: 1,
                pad: 0,
                dilation: 1,
            }
        } else {
            ConvParams::square(1, 1, 0, 1)
        };
        layers.push(LayerSpec::conv(name.clone(), &prev, geom, dim));
        prev = name;
        if i + 1 < cls.fc_dims.len() {
            let relu = format!("{prev}_relu");
            layers.push(LayerSpec::relu(relu.clone(), &prev));
            prev = relu;
        }
    }
    layers.push(LayerSpec::softmax("prob", &prev));
    NetworkSpec::new(layers, cls.fc_dims.last().copied())
}

/// Weights for the filter form: trunk weights plus each dense matrix
/// reshaped to a conv kernel with identical element order.
pub fn filter_weights<T: Scalar>(cls: &ClassifierSpec, trunk: &WeightStore<T>, dense: &[DenseWeights<T>]) -> Result<WeightStore<T>> {
    if dense.len() != cls.fc_dims.len() {
        return Err(Error::Parameter(format!(
            "{} dense layers declared, {} weight matrices given",
            cls.fc_dims.len(),
            dense.len()
        )));
    }
    let mut out = trunk.clone();
    if dense.is_empty() {
        return Ok(out);
    }
    let (c, hc, wc) = trunk_extent(cls)?;
    let mut fan_in = (c, hc, wc);
    for (i, (d, &dim)) in dense.iter().zip(&cls.fc_dims).enumerate() {
        let expect = fan_in.0 * fan_in.1 * fan_in.2;
        if d.outputs != dim || d.inputs != expect || d.weight.len() != dim * expect || d.bias.len() != dim {
            return Err(Error::dim(
                "dense",
                format!("`{}` must be {dim}x{expect} with {dim} biases", fc_name(i)),
            ));
        }
        let kernel = Tensor::from_vec(Shape::new(dim, fan_in.0, fan_in.1, fan_in.2), d.weight.clone())?;
        out.insert(fc_name(i), ConvWeights { kernel, bias: d.bias.clone() });
        fan_in = (dim, 1, 1);
    }
    Ok(out)
}

/// Evaluates the classifier form directly: trunk, flatten, dense layers.
/// Returns class probabilities per batch item.
pub fn classify<T: Scalar>(
    cls: &ClassifierSpec,
    trunk: &WeightStore<T>,
    dense: &[DenseWeights<T>],
    inputs: &Inputs<T>,
) -> Result<Vec<Vec<T>>> {
    let feat = forward(&cls.trunk, trunk, inputs, Mode::Test)?.into_output();
    let s = feat.shape();
    let mut result = Vec::with_capacity(s.n);
    for n in 0..s.n {
        let mut v: Vec<T> = (0..s.c).flat_map(|c| feat.plane(n, c).iter().copied()).collect();
        for (i, d) in dense.iter().enumerate() {
            if d.inputs != v.len() {
                return Err(Error::dim("dense", format!("`{}` expects {} inputs, got {}", fc_name(i), d.inputs, v.len())));
            }
            let mut next: Vec<T> = d
                .weight
                .chunks(d.inputs)
                .zip(&d.bias)
                .map(|(row, &b)| row.iter().zip(&v).fold(T::zero(), |acc, (&w, &x)| acc + w * x) + b)
                .collect();
            if i + 1 < dense.len() {
                next.iter_mut().for_each(|x| *x = x.max(T::zero()));
            }
            v = next;
        }
        let logits = Tensor::from_vec(Shape::new(1, v.len(), 1, 1), v)?;
        result.push(softmax_channels(&logits).into_vec());
    }
    Ok(result)
}
