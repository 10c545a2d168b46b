use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::kernels::ConvParams;

#[derive(Debug, Clone, PartialEq)]
pub enum LayerKind {
    Input { channels: usize },
    Conv { geom: ConvParams, out_channels: usize },
    Pool { geom: ConvParams },
    Relu,
    /// Inverted dropout: identity at test time.
    Dropout { ratio: f64 },
    /// Softmax over the channel axis.
    Softmax,
    /// Fixed bilinear upsampling.
    Upsample { factor: usize },
    Concat,
}

impl LayerKind {
    pub fn name(&self) -> &'static str {
        match self {
            LayerKind::Input { .. } => "input",
            LayerKind::Conv { .. } => "conv",
            LayerKind::Pool { .. } => "pool",
            LayerKind::Relu => "relu",
            LayerKind::Dropout { .. } => "dropout",
            LayerKind::Softmax => "softmax",
            LayerKind::Upsample { .. } => "upsample",
            LayerKind::Concat => "concat",
        }
    }

    pub fn geom(&self) -> Option<&ConvParams> {
        match self {
            LayerKind::Conv { geom, .. } | LayerKind::Pool { geom } => Some(geom),
            _ => None,
        }
    }

    fn arity(&self) -> usize {
        match self {
            LayerKind::Input { .. } => 0,
            LayerKind::Concat => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    /// Predecessor layer names.
    pub inputs: Vec<String>,
}

impl LayerSpec {
    pub fn new(name: impl Into<String>, kind: LayerKind, inputs: &[&str]) -> Self {
        LayerSpec {
            name: name.into(),
            kind,
            inputs: inputs.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn input(name: impl Into<String>, channels: usize) -> Self {
        LayerSpec::new(name, LayerKind::Input { channels }, &[])
    }

    pub fn conv(name: impl Into<String>, from: &str, geom: ConvParams, out_channels: usize) -> Self {
        LayerSpec::new(name, LayerKind::Conv { geom, out_channels }, &[from])
    }

    pub fn pool(name: impl Into<String>, from: &str, geom: ConvParams) -> Self {
        LayerSpec::new(name, LayerKind::Pool { geom }, &[from])
    }

    pub fn relu(name: impl Into<String>, from: &str) -> Self {
        LayerSpec::new(name, LayerKind::Relu, &[from])
    }

    pub fn dropout(name: impl Into<String>, from: &str, ratio: f64) -> Self {
        LayerSpec::new(name, LayerKind::Dropout { ratio }, &[from])
    }

    pub fn softmax(name: impl Into<String>, from: &str) -> Self {
        LayerSpec::new(name, LayerKind::Softmax, &[from])
    }

    pub fn upsample(name: impl Into<String>, from: &str, factor: usize) -> Self {
        LayerSpec::new(name, LayerKind::Upsample { factor }, &[from])
    }

    pub fn concat(name: impl Into<String>, a: &str, b: &str) -> Self {
        LayerSpec::new(name, LayerKind::Concat, &[a, b])
    }
}

/// A validated layer DAG stored in topological order.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    layers: Vec<LayerSpec>,
    classes: Option<usize>,
    preds: Vec<Vec<usize>>,
    channels: Vec<usize>,
    output: usize,
}

impl NetworkSpec {
    /// Validates names, ordering, arity, geometry, channel flow, the single
    /// sink and the softmax placement.
    pub fn new(layers: Vec<LayerSpec>, classes: Option<usize>) -> Result<Self> {
        if !layers.iter().any(|l| !matches!(l.kind, LayerKind::Input { .. })) {
            return Err(Error::semantic("<network>", "layer list is empty"));
        }
        if !layers.iter().any(|l| matches!(l.kind, LayerKind::Input { .. })) {
            return Err(Error::semantic("<network>", "no input branch declared"));
        }
        let mut index = HashMap::new();
        let mut preds = Vec::with_capacity(layers.len());
        let mut channels: Vec<usize> = Vec::with_capacity(layers.len());
        let mut consumers = vec![0usize; layers.len()];
        for (i, layer) in layers.iter().enumerate() {
            let name = layer.name.as_str();
            if name.is_empty() || name.contains(|c: char| c.is_whitespace() || c == ',' || c == '=') {
                return Err(Error::semantic(name, "invalid layer name"));
            }
            if index.insert(name.to_string(), i).is_some() {
                return Err(Error::semantic(name, "duplicate layer name"));
            }
            if layer.inputs.len() != layer.kind.arity() {
                return Err(Error::semantic(
                    name,
                    format!(
                        "{} layers take {} input(s), got {}",
                        layer.kind.name(),
                        layer.kind.arity(),
                        layer.inputs.len()
                    ),
                ));
            }
            let mut p = Vec::with_capacity(layer.inputs.len());
            for src in &layer.inputs {
                match index.get(src.as_str()) {
                    Some(&j) if j < i => {
                        p.push(j);
                        consumers[j] += 1;
                    }
                    _ => {
                        return Err(Error::semantic(
                            name,
                            format!("predecessor `{src}` is not defined before this layer"),
                        ))
                    }
                }
            }
            let in_c = p.first().map(|&j| channels[j]).unwrap_or(0);
            let c = match &layer.kind {
                LayerKind::Input { channels } => {
                    if *channels == 0 {
                        return Err(Error::semantic(name, "input needs at least one channel"));
                    }
                    *channels
                }
                LayerKind::Conv { geom, out_channels } => {
                    geom.validate().map_err(|e| Error::semantic(name, e.to_string()))?;
                    if *out_channels == 0 {
                        return Err(Error::semantic(name, "conv needs at least one output channel"));
                    }
                    *out_channels
                }
                LayerKind::Pool { geom } => {
                    geom.validate().map_err(|e| Error::semantic(name, e.to_string()))?;
                    in_c
                }
                LayerKind::Dropout { ratio } => {
                    if !(0.0..1.0).contains(ratio) {
                        return Err(Error::semantic(name, "dropout ratio must lie in [0, 1)"));
                    }
                    in_c
                }
                LayerKind::Upsample { factor } => {
                    if *factor == 0 {
                        return Err(Error::semantic(name, "upsample factor must be at least 1"));
                    }
                    in_c
                }
                LayerKind::Concat => in_c + channels[p[1]],
                LayerKind::Relu | LayerKind::Softmax => in_c,
            };
            channels.push(c);
            preds.push(p);
        }
        let sinks: Vec<usize> = (0..layers.len()).filter(|&i| consumers[i] == 0).collect();
        if sinks.len() != 1 {
            let names: Vec<&str> = sinks.iter().map(|&i| layers[i].name.as_str()).collect();
            return Err(Error::semantic(
                names.first().copied().unwrap_or("<network>"),
                format!("network must have exactly one output, found {}: {}", names.len(), names.join(", ")),
            ));
        }
        let output = sinks[0];
        let softmaxes: Vec<usize> = (0..layers.len())
            .filter(|&i| layers[i].kind == LayerKind::Softmax)
            .collect();
        if softmaxes.len() > 1 {
            return Err(Error::semantic(&layers[softmaxes[1]].name, "only one softmax layer is allowed"));
        }
        if let Some(&s) = softmaxes.first() {
            if s != output {
                return Err(Error::semantic(&layers[s].name, "softmax must be the terminal layer"));
            }
        }
        if let Some(k) = classes {
            if k == 0 {
                return Err(Error::semantic("<network>", "class count must be at least 1"));
            }
            if channels[output] != k {
                return Err(Error::semantic(
                    &layers[output].name,
                    format!("output has {} channels but the network declares {k} classes", channels[output]),
                ));
            }
        }
        Ok(NetworkSpec {
            layers,
            classes,
            preds,
            channels,
            output,
        })
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn into_layers(self) -> Vec<LayerSpec> {
        self.layers
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn classes(&self) -> Option<usize> {
        self.classes
    }

    pub fn layer(&self, name: &str) -> Option<&LayerSpec> {
        self.index_of(name).map(|i| &self.layers[i])
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.layers.iter().position(|l| l.name == name)
    }

    pub fn preds(&self, i: usize) -> &[usize] {
        &self.preds[i]
    }

    /// Channel count of layer `i`'s output.
    pub fn channels(&self, i: usize) -> usize {
        self.channels[i]
    }

    /// Channel count feeding layer `i` (its first predecessor).
    pub fn in_channels(&self, i: usize) -> usize {
        self.preds[i].first().map(|&j| self.channels[j]).unwrap_or(0)
    }

    pub fn output(&self) -> usize {
        self.output
    }

    pub fn output_layer(&self) -> &LayerSpec {
        &self.layers[self.output]
    }

    /// Declared input branches in order: `(name, channels)`.
    pub fn input_branches(&self) -> Vec<(&str, usize)> {
        self.layers
            .iter()
            .filter_map(|l| match l.kind {
                LayerKind::Input { channels } => Some((l.name.as_str(), channels)),
                _ => None,
            })
            .collect()
    }

    pub fn conv_layers(&self) -> impl Iterator<Item = (usize, &LayerSpec)> {
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, l)| matches!(l.kind, LayerKind::Conv { .. }))
    }

    /// Number of conv layers, i.e. layers that own weights.
    pub fn weighted_layers(&self) -> usize {
        self.conv_layers().count()
    }

    /// Weights plus biases over all conv layers.
    pub fn param_count(&self) -> usize {
        self.conv_layers()
            .map(|(i, l)| match &l.kind {
                LayerKind::Conv { geom, out_channels } => {
                    out_channels * (self.in_channels(i) * geom.kernel_h * geom.kernel_w + 1)
                }
                _ => 0,
            })
            .sum()
    }

    pub fn has_softmax(&self) -> bool {
        self.layers[self.output].kind == LayerKind::Softmax
    }
}

impl fmt::Display for NetworkSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}
