use std::collections::HashMap;

use super::layer::{LayerKind, NetworkSpec};
use crate::error::{Error, Result};

/// Geometry of one layer's output relative to the input pixel lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerField {
    /// Spacing, in input pixels, of the grid the layer reads.
    pub stride_in: usize,
    /// Spacing of the grid the layer writes.
    pub stride_out: usize,
    /// Input extent that influences one output value.
    pub support: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReceptiveField {
    pub support: usize,
    /// Product of all layer strides (the downsampling factor).
    pub stride: usize,
}

/// Per-layer strides and supports. Concat inputs must sit on the same grid.
pub fn layer_fields(net: &NetworkSpec) -> Result<Vec<LayerField>> {
    let mut out: Vec<LayerField> = Vec::with_capacity(net.len());
    for (i, layer) in net.layers().iter().enumerate() {
        let preds = net.preds(i);
        let (stride_in, support_in) = match preds {
            [] => (1, 1),
            [p] => (out[*p].stride_out, out[*p].support),
            [a, b] => {
                let (fa, fb) = (out[*a], out[*b]);
                if fa.stride_out != fb.stride_out {
                    return Err(Error::semantic(
                        &layer.name,
                        format!(
                            "branch strides disagree: `{}` has {} and `{}` has {}",
                            layer.inputs[0], fa.stride_out, layer.inputs[1], fb.stride_out
                        ),
                    ));
                }
                (fa.stride_out, fa.support.max(fb.support))
            }
            _ => unreachable!("arity is validated"),
        };
        let field = match &layer.kind {
            LayerKind::Conv { geom, .. } | LayerKind::Pool { geom } => {
                let extent = geom.extent_h().max(geom.extent_w());
                LayerField {
                    stride_in,
                    stride_out: stride_in * geom.stride,
                    support: support_in + (extent - 1) * stride_in,
                }
            }
            LayerKind::Upsample { factor } if *factor > 1 => {
                if stride_in % factor != 0 {
                    return Err(Error::semantic(
                        &layer.name,
                        format!("upsampling by {factor} does not divide the incoming stride {stride_in}"),
                    ));
                }
                LayerField {
                    stride_in,
                    stride_out: stride_in / factor,
                    // Interpolation blends two neighbouring coarse samples.
                    support: support_in + stride_in,
                }
            }
            _ => LayerField {
                stride_in,
                stride_out: stride_in,
                support: support_in,
            },
        };
        out.push(field);
    }
    Ok(out)
}

/// Support and downsampling factor of the network output.
pub fn receptive_field(net: &NetworkSpec) -> Result<ReceptiveField> {
    let fields = layer_fields(net)?;
    let f = fields[net.output()];
    Ok(ReceptiveField {
        support: f.support,
        stride: f.stride_out,
    })
}

/// Channels and spatial extent of one layer output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureShape {
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

/// Output extents of every layer for the given input extents (keyed by
/// input branch name).
pub fn infer_shapes(net: &NetworkSpec, inputs: &HashMap<String, (usize, usize)>) -> Result<Vec<FeatureShape>> {
    let mut out: Vec<FeatureShape> = Vec::with_capacity(net.len());
    for (i, layer) in net.layers().iter().enumerate() {
        let first = net.preds(i).first().map(|&p| out[p]);
        let c = net.channels(i);
        let wrap = |e: Error| Error::semantic(&layer.name, e.to_string());
        let shape = match &layer.kind {
            LayerKind::Input { .. } => {
                let &(h, w) = inputs
                    .get(&layer.name)
                    .ok_or_else(|| Error::semantic(&layer.name, "no extent given for this input"))?;
                FeatureShape { c, h, w }
            }
            LayerKind::Conv { geom, .. } | LayerKind::Pool { geom } => {
                let s = first.expect("one predecessor");
                let (h, w) = geom.output_hw(s.h, s.w).map_err(wrap)?;
                FeatureShape { c, h, w }
            }
            LayerKind::Upsample { factor } => {
                let s = first.expect("one predecessor");
                FeatureShape {
                    c,
                    h: s.h * factor,
                    w: s.w * factor,
                }
            }
            LayerKind::Concat => {
                let (a, b) = (out[net.preds(i)[0]], out[net.preds(i)[1]]);
                if (a.h, a.w) != (b.h, b.w) {
                    return Err(Error::semantic(
                        &layer.name,
                        format!("concat inputs are {}x{} and {}x{}", a.h, a.w, b.h, b.w),
                    ));
                }
                FeatureShape { c, h: a.h, w: a.w }
            }
            _ => {
                let s = first.expect("one predecessor");
                FeatureShape { c, h: s.h, w: s.w }
            }
        };
        out.push(shape);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::parse_spec;

    #[test]
    fn single_conv() {
        let net = parse_spec("input a channels=1\nc conv k=5 c=1\n").unwrap();
        assert_eq!(receptive_field(&net).unwrap(), ReceptiveField { support: 5, stride: 1 });
    }

    #[test]
    fn branch_stride_disagreement() {
        let text = "input a channels=1\ninput b channels=1\npa pool in=a k=2 s=2\ncat concat in=pa,b\n";
        let net = parse_spec(text).unwrap();
        assert_eq!(receptive_field(&net).unwrap_err().kind(), "semantic");
    }

    #[test]
    fn upsample_restores_grid() {
        let net = parse_spec("input a channels=1\np pool k=2 s=2\nu upsample f=2\n").unwrap();
        let rf = receptive_field(&net).unwrap();
        assert_eq!(rf.stride, 1);
        assert_eq!(rf.support, 4);
    }
}
