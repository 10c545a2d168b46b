//! Multiply-accumulate counts for dense prediction with and without
//! downsampling.
//!
//! A network of `L` convolutions produces full-resolution output either by
//! shift-and-stitch (`s^2` passes of the strided network) or by one pass of
//! the rewritten stride-1 network. Only convolutions are counted; pooling is
//! treated as free and dilation does not change the count.

mod timing;

use std::fmt;

use num_rational::Ratio;

use crate::error::{Error, Result};
use crate::net::{layer_fields, LayerKind, NetworkSpec};

pub use timing::{median_seconds, time_comparison, TimingReport};

/// One convolution in a cost chain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CostLayer {
    pub name: String,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    /// Spacing of this layer's output grid in input pixels, for the strided
    /// network.
    pub grid: usize,
}

impl CostLayer {
    /// Multiply-accumulates per output pixel.
    pub fn macs_per_pixel(&self) -> u128 {
        (self.kernel_h * self.kernel_w * self.in_channels * self.out_channels) as u128
    }
}

/// Convolution chain plus the total downsampling factor `s`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CostModel {
    pub layers: Vec<CostLayer>,
    pub stride: usize,
}

impl CostModel {
    /// Chain where every convolution is followed by a factor-2 downsampling,
    /// so layer `l` (1-based) runs on grid `2^(l-1)` and `s = 2^L`.
    /// Entries are `(kernel_h, kernel_w, in_channels, out_channels)`.
    pub fn halving_chain(layers: &[(usize, usize, usize, usize)]) -> Self {
        let layers: Vec<CostLayer> = layers
            .iter()
            .enumerate()
            .map(|(i, &(kh, kw, cin, cout))| CostLayer {
                name: format!("conv{}", i + 1),
                kernel_h: kh,
                kernel_w: kw,
                in_channels: cin,
                out_channels: cout,
                grid: 1 << i,
            })
            .collect();
        let stride = 1 << layers.len();
        CostModel { layers, stride }
    }

    /// Conv layers of a network, each placed on its output grid. `s` is the
    /// coarsest grid any layer writes.
    pub fn from_network(net: &NetworkSpec) -> Result<Self> {
        let fields = layer_fields(net)?;
        let stride = fields.iter().map(|f| f.stride_out).max().unwrap_or(1);
        let layers: Vec<CostLayer> = net
            .conv_layers()
            .map(|(i, layer)| {
                let LayerKind::Conv { geom, out_channels } = &layer.kind else {
                    unreachable!("conv_layers yields convolutions")
                };
                CostLayer {
                    name: layer.name.clone(),
                    kernel_h: geom.kernel_h,
                    kernel_w: geom.kernel_w,
                    in_channels: net.in_channels(i),
                    out_channels: *out_channels,
                    grid: fields[i].stride_out,
                }
            })
            .collect();
        if layers.is_empty() {
            return Err(Error::Parameter("network has no convolution layers".into()));
        }
        if let Some(l) = layers.iter().find(|l| stride % l.grid != 0) {
            return Err(Error::semantic(&l.name, format!("grid {} does not divide the stride {stride}", l.grid)));
        }
        Ok(CostModel { layers, stride })
    }

    /// Passes the strided network needs per output pixel of layer `l`,
    /// relative to the dense network: `(s / grid)^2`.
    fn replication(&self, l: &CostLayer) -> u128 {
        let r = (self.stride / l.grid) as u128;
        r * r
    }

    /// Multiply-accumulates of one pass of the stride-1 network over a
    /// `width x height` image.
    pub fn lambda_no_ds(&self, width: usize, height: usize) -> u128 {
        let per_pixel: u128 = self.layers.iter().map(CostLayer::macs_per_pixel).sum();
        (width * height) as u128 * per_pixel
    }

    /// Multiply-accumulates of all `s^2` shifted passes of the strided
    /// network over a `width x height` image.
    pub fn lambda_shift_stitch(&self, width: usize, height: usize) -> u128 {
        let per_pixel: u128 = self
            .layers
            .iter()
            .map(|l| self.replication(l) * l.macs_per_pixel())
            .sum();
        (width * height) as u128 * per_pixel
    }

    /// `lambda_shift_stitch / lambda_no_ds`, exact and independent of image size.
    pub fn speedup_eta(&self) -> Result<Ratio<u128>> {
        let den = self.lambda_no_ds(1, 1);
        if den == 0 {
            return Err(Error::Undefined("speed-up of a network without multiply-accumulates".into()));
        }
        Ok(Ratio::new(self.lambda_shift_stitch(1, 1), den))
    }

    pub fn report(&self, width: usize, height: usize) -> Result<CostReport> {
        let eta = self.speedup_eta()?;
        Ok(CostReport {
            width,
            height,
            stride: self.stride,
            rows: self
                .layers
                .iter()
                .map(|l| CostRow {
                    name: l.name.clone(),
                    kernel: (l.kernel_h, l.kernel_w),
                    channels: (l.in_channels, l.out_channels),
                    grid: l.grid,
                    macs_no_ds: (width * height) as u128 * l.macs_per_pixel(),
                    macs_shift_stitch: (width * height) as u128 * self.replication(l) * l.macs_per_pixel(),
                })
                .collect(),
            lambda_shift_stitch: self.lambda_shift_stitch(width, height),
            lambda_no_ds: self.lambda_no_ds(width, height),
            eta,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CostRow {
    pub name: String,
    pub kernel: (usize, usize),
    /// `(n_{l-1}, n_l)`.
    pub channels: (usize, usize),
    pub grid: usize,
    pub macs_no_ds: u128,
    pub macs_shift_stitch: u128,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CostReport {
    pub width: usize,
    pub height: usize,
    pub stride: usize,
    pub rows: Vec<CostRow>,
    pub lambda_shift_stitch: u128,
    pub lambda_no_ds: u128,
    pub eta: Ratio<u128>,
}

impl CostReport {
    pub fn eta_f64(&self) -> f64 {
        *self.eta.numer() as f64 / *self.eta.denom() as f64
    }

    /// Line-delimited `key=value` form.
    pub fn to_key_values(&self) -> String {
        let mut out = format!(
            "width={}\nheight={}\nstride={}\nlayers={}\n",
            self.width,
            self.height,
            self.stride,
            self.rows.len()
        );
        for (i, r) in self.rows.iter().enumerate() {
            out += &format!(
                "layer.{i}.name={}\nlayer.{i}.kernel={}x{}\nlayer.{i}.in={}\nlayer.{i}.out={}\nlayer.{i}.grid={}\nlayer.{i}.macs_no_ds={}\nlayer.{i}.macs_shift_stitch={}\n",
                r.name, r.kernel.0, r.kernel.1, r.channels.0, r.channels.1, r.grid, r.macs_no_ds, r.macs_shift_stitch
            );
        }
        out += &format!(
            "lambda_shift_stitch={}\nlambda_no_ds={}\neta={}/{}\neta_decimal={:.6}\n",
            self.lambda_shift_stitch,
            self.lambda_no_ds,
            self.eta.numer(),
            self.eta.denom(),
            self.eta_f64()
        );
        out
    }
}

impl fmt::Display for CostReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "image {}x{}, stride {}", self.width, self.height, self.stride)?;
        writeln!(
            f,
            "{:<12} {:>7} {:>7} {:>7} {:>5} {:>22} {:>22}",
            "layer", "kernel", "n_in", "n_out", "grid", "no-downsampling", "shift-and-stitch"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<12} {:>7} {:>7} {:>7} {:>5} {:>22} {:>22}",
                r.name,
                format!("{}x{}", r.kernel.0, r.kernel.1),
                r.channels.0,
                r.channels.1,
                r.grid,
                r.macs_no_ds,
                r.macs_shift_stitch
            )?;
        }
        writeln!(f, "lambda (no-downsampling)  = {}", self.lambda_no_ds)?;
        writeln!(f, "lambda0 (shift-and-stitch) = {}", self.lambda_shift_stitch)?;
        writeln!(f, "eta = {:.4}", self.eta_f64())
    }
}
