use std::fmt;

use crate::error::{Error, Result};
use crate::kernels::ConvParams;
use crate::net::{receptive_field, LayerKind, LayerSpec, NetworkSpec};

/// How a pooling window grows once the grid below it has been densified by
/// a rate `r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PoolExpansion {
    /// Keep the `k` taps and space them `r` apart. The rewritten network
    /// reproduces shift-and-stitch exactly.
    #[default]
    Dilated,
    /// Pool densely over the whole `r*(k-1)+1` window with no holes. Same
    /// extent and padding as the dilated form, but the max also sees the
    /// interleaved samples of other phases, so it is only exact for pools
    /// that see `r = 1`.
    Dense,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RewriteOptions {
    /// Downsampling factor left in the rewritten network.
    pub keep_factor: usize,
    pub pool_expansion: PoolExpansion,
}

impl Default for RewriteOptions {
    fn default() -> Self {
        RewriteOptions {
            keep_factor: 1,
            pool_expansion: PoolExpansion::Dilated,
        }
    }
}

/// Before/after geometry of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerRewrite {
    pub name: String,
    pub kind: &'static str,
    pub before: Option<ConvParams>,
    pub after: Option<ConvParams>,
    pub out_channels: Option<usize>,
    /// Accumulated densification rate of the grid this layer reads.
    pub rate: usize,
    /// Upsampling factor before and after, for upsample layers.
    pub upsample: Option<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewriteReport {
    pub rows: Vec<LayerRewrite>,
    pub original_stride: usize,
    pub residual_stride: usize,
    pub options: RewriteOptions,
}

/// Rate each layer's output must reach: the target rate scaled by the
/// upsampling still to come on the way to the output.
fn needed_rates(net: &NetworkSpec, target: usize) -> Vec<usize> {
    let mut need = vec![target; net.len()];
    for j in (0..net.len()).rev() {
        let above = match net.layers()[j].kind {
            LayerKind::Upsample { factor } => need[j] * factor,
            _ => need[j],
        };
        for &p in net.preds(j) {
            need[p] = above;
        }
    }
    need
}

fn rewrite_with(net: &NetworkSpec, options: RewriteOptions, stride: usize) -> Result<(Vec<LayerSpec>, Vec<LayerRewrite>)> {
    let target = stride / options.keep_factor;
    let need = needed_rates(net, target);
    let mut rates: Vec<usize> = Vec::with_capacity(net.len());
    let mut layers = Vec::with_capacity(net.len());
    let mut rows = Vec::with_capacity(net.len());
    for (i, layer) in net.layers().iter().enumerate() {
        let r = match net.preds(i) {
            [] => 1,
            [p] => rates[*p],
            [a, b] => {
                if rates[*a] != rates[*b] {
                    return Err(Error::semantic(&layer.name, "concat branches are rewritten at different rates"));
                }
                rates[*a]
            }
            _ => unreachable!("arity is validated"),
        };
        let mut rate_out = r;
        let mut new_layer = layer.clone();
        let mut row = LayerRewrite {
            name: layer.name.clone(),
            kind: layer.kind.name(),
            before: layer.kind.geom().copied(),
            after: None,
            out_channels: None,
            rate: r,
            upsample: None,
        };
        // Strides are removed while the rate is short of what this layer needs.
        let mut restride = |g: &ConvParams| -> Result<usize> {
            if r < need[i] && g.stride > 1 {
                let rate = r * g.stride;
                if need[i] % rate != 0 {
                    return Err(Error::Parameter(format!(
                        "layer `{}` would remove stride past the requested keep factor",
                        layer.name
                    )));
                }
                rate_out = rate;
                Ok(1)
            } else {
                Ok(g.stride)
            }
        };
        match &layer.kind {
            LayerKind::Conv { geom, out_channels } => {
                let mut g = *geom;
                if g.kernel_h > 1 || g.kernel_w > 1 {
                    g.dilation = geom.dilation * r;
                }
                g.pad = geom.pad * r;
                g.stride = restride(geom)?;
                new_layer.kind = LayerKind::Conv {
                    geom: g,
                    out_channels: *out_channels,
                };
                row.after = Some(g);
                row.out_channels = Some(*out_channels);
            }
            LayerKind::Pool { geom } => {
                let mut g = *geom;
                match options.pool_expansion {
                    PoolExpansion::Dilated => {
                        if g.kernel_h > 1 || g.kernel_w > 1 {
                            g.dilation = geom.dilation * r;
                        }
                    }
                    PoolExpansion::Dense => {
                        g.kernel_h = r * (geom.extent_h() - 1) + 1;
                        g.kernel_w = r * (geom.extent_w() - 1) + 1;
                        g.dilation = 1;
                    }
                }
                g.pad = geom.pad * r;
                g.stride = restride(geom)?;
                new_layer.kind = LayerKind::Pool { geom: g };
                row.after = Some(g);
            }
            LayerKind::Upsample { factor } => {
                let f = *factor;
                let (new_f, rate) = if f % r == 0 {
                    (f / r, 1)
                } else if r % f == 0 {
                    (1, r / f)
                } else {
                    return Err(Error::semantic(
                        &layer.name,
                        format!("upsampling by {f} cannot be rewritten at rate {r}"),
                    ));
                };
                rate_out = rate;
                new_layer.kind = LayerKind::Upsample { factor: new_f };
                row.upsample = Some((f, new_f));
            }
            _ => {}
        }
        rates.push(rate_out);
        layers.push(new_layer);
        rows.push(row);
    }
    let out = rates[net.output()];
    if out != target {
        return Err(Error::Parameter(format!(
            "strides along the output path only remove a factor of {out}, not {target}"
        )));
    }
    Ok((layers, rows))
}

/// Keep factors `remove_downsampling` accepts for this network, ascending.
pub fn achievable_keep_factors(net: &NetworkSpec) -> Result<Vec<usize>> {
    let stride = receptive_field(net)?.stride;
    Ok((1..=stride)
        .filter(|k| stride % k == 0)
        .filter(|&k| {
            let opts = RewriteOptions {
                keep_factor: k,
                ..Default::default()
            };
            rewrite_with(net, opts, stride).is_ok()
        })
        .collect())
}

/// Rewrites a downsampling network into one with residual stride
/// `keep_factor`, leaving every parameter array unchanged.
///
/// Layers are walked in order with an accumulated rate `r` (initially 1).
/// Every conv is dilated by `r` and its padding scaled by `r`; pools are
/// expanded by `r` according to [`PoolExpansion`]. While `r` is short of
/// `stride / keep_factor` times the upsampling still ahead, a layer's stride
/// is set to 1 and `r` is multiplied by the old stride. Upsampling layers
/// absorb `r` into their factor.
pub fn remove_downsampling(net: &NetworkSpec, options: RewriteOptions) -> Result<(NetworkSpec, RewriteReport)> {
    let original_stride = receptive_field(net)?.stride;
    if options.keep_factor == 0 || original_stride % options.keep_factor != 0 {
        return Err(Error::Parameter(format!(
            "keep factor {} does not divide the network stride {original_stride}; achievable: {:?}",
            options.keep_factor,
            achievable_keep_factors(net)?
        )));
    }
    let (layers, rows) = rewrite_with(net, options, original_stride).map_err(|e| match e {
        Error::Parameter(msg) => Error::Parameter(format!(
            "{msg}; achievable keep factors: {:?}",
            achievable_keep_factors(net).unwrap_or_default()
        )),
        other => other,
    })?;
    let rewritten = NetworkSpec::new(layers, net.classes())?;
    let residual_stride = receptive_field(&rewritten)?.stride;
    Ok((
        rewritten,
        RewriteReport {
            rows,
            original_stride,
            residual_stride,
            options,
        },
    ))
}

impl fmt::Display for RewriteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<10} {:<8} {:>5} {:>12} {:>9} {:>10} {:>12} {:>10}",
            "layer", "kind", "rate", "filter size", "filters", "dilation", "padding", "stride"
        )?;
        let dash = || "-".to_string();
        for row in &self.rows {
            let (size, dil, pad, stride) = match (row.before, row.after) {
                (Some(b), Some(a)) => {
                    let size = format!("{}x{}", a.kernel_h, a.kernel_w);
                    let dil = if a.kernel_h == 1 && a.kernel_w == 1 || a.dilation == 1 && row.kind == "pool" {
                        dash()
                    } else {
                        a.dilation.to_string()
                    };
                    let pad = if b.pad == a.pad { a.pad.to_string() } else { format!("{}->{}", b.pad, a.pad) };
                    let stride = if b.stride == a.stride {
                        a.stride.to_string()
                    } else {
                        format!("{}->{}", b.stride, a.stride)
                    };
                    (size, dil, pad, stride)
                }
                _ => match row.upsample {
                    Some((b, a)) => (format!("x{b}->x{a}"), dash(), dash(), dash()),
                    None => (dash(), dash(), dash(), dash()),
                },
            };
            let filters = row.out_channels.map_or_else(dash, |c| c.to_string());
            writeln!(
                f,
                "{:<10} {:<8} {:>5} {:>12} {:>9} {:>10} {:>12} {:>10}",
                row.name, row.kind, row.rate, size, filters, dil, pad, stride
            )?;
        }
        writeln!(
            f,
            "stride {} -> {} (pool expansion: {:?})",
            self.original_stride, self.residual_stride, self.options.pool_expansion
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::parse_spec;

    #[test]
    fn all_stride_one_is_unchanged() {
        let net = parse_spec("input a channels=1\nc conv k=3 p=1 c=2\np pool k=3 p=1\n").unwrap();
        let (out, report) = remove_downsampling(&net, RewriteOptions::default()).unwrap();
        assert_eq!(out, net);
        assert!(report.rows.iter().all(|r| r.rate == 1));
    }

    #[test]
    fn unachievable_keep_factor_lists_options() {
        let net = parse_spec("input a channels=1\nc conv k=3 c=2 s=4\np pool k=2 s=2\n").unwrap();
        assert_eq!(achievable_keep_factors(&net).unwrap(), vec![1, 2, 8]);
        let err = remove_downsampling(
            &net,
            RewriteOptions {
                keep_factor: 4,
                ..Default::default()
            },
        )
        .unwrap_err();
        assert_eq!(err.kind(), "parameter");
        assert!(err.to_string().contains("[1, 2, 8]"), "{err}");
        assert!(remove_downsampling(
            &net,
            RewriteOptions {
                keep_factor: 3,
                ..Default::default()
            }
        )
        .is_err());
    }
}
