use rayon::prelude::*;

use super::scene::{split_branches, SceneRaster};
use crate::error::{Error, Result};
use crate::kernels::bilinear_upsample;
use crate::metrics::{boundary_ignore_mask, EvalMode, UNKNOWN};
use crate::net::{forward, receptive_field, Mode, NetworkSpec, WeightStore};
use crate::raster::{IgnoreMask, LabelImage};
use crate::tensor::{Shape, Tensor};
use crate::trainer::TrainTile;

/// Default inference tile edge.
pub const DEFAULT_TEST_TILE: usize = 512;

/// Non-overlapping `tile x tile` crops on a grid from the top-left corner;
/// partial tiles at the right and bottom are dropped.
pub fn make_training_tiles(scene: &SceneRaster, tile: usize) -> Result<Vec<SceneRaster>> {
    if tile == 0 {
        return Err(Error::Parameter("tile size must be positive".into()));
    }
    let (rows, cols) = (scene.height() / tile, scene.width() / tile);
    if rows == 0 || cols == 0 {
        log::warn!(
            "scene {}x{} is smaller than the {tile}px training tile; no tiles produced",
            scene.width(),
            scene.height()
        );
    }
    (0..rows)
        .flat_map(|r| (0..cols).map(move |c| (r, c)))
        .map(|(r, c)| scene.crop(r * tile, c * tile, tile, tile))
        .collect()
}

/// Training tiles with their loss masks: the label boundary band of the
/// whole scene, invalid pixels, and in Vaihingen mode unknown labels.
pub fn training_set(
    scenes: &[SceneRaster],
    net: &NetworkSpec,
    tile: usize,
    boundary_radius: usize,
    mode: EvalMode,
) -> Result<Vec<TrainTile<f32>>> {
    let mut out = Vec::new();
    for scene in scenes {
        let mut mask = boundary_ignore_mask(&scene.labels, boundary_radius);
        if let Some(invalid) = &scene.invalid {
            mask = mask.union(invalid)?;
        }
        if mode == EvalMode::Vaihingen {
            let unknown = IgnoreMask::from_fn(scene.width(), scene.height(), |y, x| scene.labels.get(y, x) == UNKNOWN);
            mask = mask.union(&unknown)?;
        }
        let with_mask = SceneRaster {
            invalid: Some(mask),
            ..scene.clone()
        };
        for t in make_training_tiles(&with_mask, tile)? {
            out.push(TrainTile {
                inputs: split_branches(&t.bands, net)?,
                labels: t.labels,
                mask: t.invalid.expect("mask set above"),
            });
        }
    }
    Ok(out)
}

/// One tile along one axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TileSpan {
    pub origin: usize,
    pub len: usize,
    /// Pixels `[own_start, own_end)` are taken from this tile.
    pub own_start: usize,
    pub own_end: usize,
}

/// Overlapping tiles covering a raster. Each pixel is owned by exactly one
/// tile and lies at least `overlap` pixels inside it, except next to the
/// raster border.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TilePlan {
    pub height: usize,
    pub width: usize,
    pub tile: usize,
    pub overlap: usize,
    pub rows: Vec<TileSpan>,
    pub cols: Vec<TileSpan>,
}

fn axis_spans(len: usize, tile: usize, overlap: usize, align: usize) -> Result<Vec<TileSpan>> {
    if tile <= 2 * overlap {
        return Err(Error::Parameter(format!(
            "tile {tile} leaves no interior with overlap {overlap}"
        )));
    }
    if len <= tile {
        return Ok(vec![TileSpan {
            origin: 0,
            len,
            own_start: 0,
            own_end: len,
        }]);
    }
    let step = (tile - 2 * overlap) / align * align;
    if step == 0 {
        return Err(Error::Parameter(format!(
            "tile {tile} with overlap {overlap} leaves no step that is a multiple of {align}"
        )));
    }
    let mut origins = vec![0];
    loop {
        let o = *origins.last().expect("non-empty");
        if o + tile >= len {
            break;
        }
        if o + step + tile < len {
            origins.push(o + step);
        } else {
            // Last tile anchored to the far border, on the alignment grid.
            let last = (len - tile) / align * align;
            if last > o {
                origins.push(last);
            }
            break;
        }
    }
    let n = origins.len();
    let mut spans = Vec::with_capacity(n);
    let mut start = 0;
    for (i, &o) in origins.iter().enumerate() {
        let span_len = if i + 1 == n { len - o } else { tile };
        let own_end = if i + 1 == n { len } else { o + tile - overlap };
        spans.push(TileSpan {
            origin: o,
            len: span_len,
            own_start: start,
            own_end,
        });
        start = own_end;
    }
    Ok(spans)
}

impl TilePlan {
    /// Tile origins are multiples of `align`.
    pub fn new(height: usize, width: usize, tile: usize, overlap: usize, align: usize) -> Result<Self> {
        if height == 0 || width == 0 || align == 0 {
            return Err(Error::Parameter("raster extent and alignment must be positive".into()));
        }
        Ok(TilePlan {
            height,
            width,
            tile,
            overlap,
            rows: axis_spans(height, tile, overlap, align)?,
            cols: axis_spans(width, tile, overlap, align)?,
        })
    }

    /// Overlap of half the network support, origins on the network stride.
    pub fn for_network(net: &NetworkSpec, height: usize, width: usize, tile: usize) -> Result<Self> {
        let rf = receptive_field(net)?;
        TilePlan::new(height, width, tile, rf.support.div_ceil(2), rf.stride)
    }

    pub fn len(&self) -> usize {
        self.rows.len() * self.cols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn tiles(&self) -> impl Iterator<Item = (TileSpan, TileSpan)> + '_ {
        self.rows.iter().flat_map(move |&r| self.cols.iter().map(move |&c| (r, c)))
    }
}

/// Class probabilities over the whole raster from per-tile forward passes.
/// Coarse outputs are upsampled bilinearly by the network stride; each
/// tile contributes only the pixels it owns.
pub fn tiled_inference(net: &NetworkSpec, w: &WeightStore<f32>, bands: &Tensor<f32>, plan: &TilePlan) -> Result<Tensor<f32>> {
    let s = bands.shape();
    if (s.h, s.w) != (plan.height, plan.width) || s.n != 1 {
        return Err(Error::dim(
            "extent",
            format!("plan covers {}x{}, image is {}", plan.height, plan.width, s),
        ));
    }
    let stride = receptive_field(net)?.stride;
    let tiles: Vec<(TileSpan, TileSpan)> = plan.tiles().collect();
    let outputs: Vec<Tensor<f32>> = tiles
        .par_iter()
        .map(|&(r, c)| {
            let inputs = split_branches(&bands.crop(r.origin, c.origin, r.len, c.len)?, net)?;
            let probs = forward(net, w, &inputs, Mode::Test)?.into_output();
            let probs = if stride > 1 { bilinear_upsample(&probs, stride)? } else { probs };
            let ps = probs.shape();
            if (ps.h, ps.w) != (r.len, c.len) {
                return Err(Error::Data(format!(
                    "a {}x{} tile yields {}x{} output; inference needs extent-preserving padding and a raster that is a multiple of the stride {stride}",
                    r.len, c.len, ps.h, ps.w
                )));
            }
            Ok(probs)
        })
        .collect::<Result<_>>()?;
    let k = outputs.first().map_or(0, |t| t.shape().c);
    let mut mosaic = Tensor::zeros(Shape::new(1, k, s.h, s.w))?;
    for ((r, c), out) in tiles.iter().zip(&outputs) {
        for ch in 0..k {
            let src = out.plane(0, ch);
            let dst = mosaic.plane_mut(0, ch);
            for y in r.own_start..r.own_end {
                let row = (y - r.origin) * c.len;
                dst[y * s.w + c.own_start..y * s.w + c.own_end]
                    .copy_from_slice(&src[row + c.own_start - c.origin..row + c.own_end - c.origin]);
            }
        }
    }
    Ok(mosaic)
}

/// Arg-max labels of [`tiled_inference`].
pub fn predict_labels(net: &NetworkSpec, w: &WeightStore<f32>, bands: &Tensor<f32>, plan: &TilePlan) -> Result<LabelImage> {
    LabelImage::argmax(&tiled_inference(net, w, bands, plan)?, 0)
}
