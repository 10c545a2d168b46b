use rayon::prelude::*;

use super::scene::SceneRaster;
use crate::error::{Error, Result};
use crate::raster::{IgnoreMask, LabelImage};
use crate::tensor::{Shape, Tensor};

/// Source coordinates may leave the pixel-centre hull by this much.
const HULL_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AugmentOptions {
    /// Rotation step in degrees; must divide 360.
    pub angle_step: u32,
    /// Also emit a mirrored copy of every rotation.
    pub flips: bool,
    /// Augmentations whose crop is narrower or shorter than this are skipped.
    pub min_size: usize,
}

impl Default for AugmentOptions {
    fn default() -> Self {
        AugmentOptions {
            angle_step: 10,
            flips: true,
            min_size: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Augmentation {
    pub angle: u32,
    pub flipped: bool,
    pub scene: SceneRaster,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentResult {
    pub outputs: Vec<Augmentation>,
    /// `(angle, flipped, reason)` of every skipped augmentation.
    pub skipped: Vec<(u32, bool, String)>,
}

/// Largest axis-aligned rectangle inside a `w x h` rectangle rotated by
/// `angle` radians, both centred on the same point.
pub fn inscribed_rect(w: f64, h: f64, angle: f64) -> (f64, f64) {
    if w <= 0.0 || h <= 0.0 {
        return (0.0, 0.0);
    }
    let (sin_a, cos_a) = (angle.sin().abs(), angle.cos().abs());
    let (long, short) = if w >= h { (w, h) } else { (h, w) };
    if short <= 2.0 * sin_a * cos_a * long || (sin_a - cos_a).abs() < 1e-10 {
        // Two opposite corners touch the long sides.
        let half = 0.5 * short;
        if w >= h {
            (half / sin_a, half / cos_a)
        } else {
            (half / cos_a, half / sin_a)
        }
    } else {
        let cos_2a = cos_a * cos_a - sin_a * sin_a;
        ((w * cos_a - h * sin_a) / cos_2a, (h * cos_a - w * sin_a) / cos_2a)
    }
}

fn sin_cos_degrees(deg: f64) -> (f64, f64) {
    let r = deg.rem_euclid(360.0);
    // Quarter turns are exact.
    match r {
        r if r == 0.0 => (0.0, 1.0),
        r if r == 90.0 => (1.0, 0.0),
        r if r == 180.0 => (0.0, -1.0),
        r if r == 270.0 => (-1.0, 0.0),
        _ => r.to_radians().sin_cos(),
    }
}

/// Rotation of a `w x h` raster by `angle` degrees, cropped to the largest
/// fully covered rectangle.
#[derive(Debug, Clone, Copy)]
pub(crate) struct RotationMap {
    pub src_w: usize,
    pub src_h: usize,
    pub out_w: usize,
    pub out_h: usize,
    sin: f64,
    cos: f64,
    flipped: bool,
}

impl RotationMap {
    pub fn new(src_w: usize, src_h: usize, angle: f64, flipped: bool) -> Self {
        let (sin, cos) = sin_cos_degrees(angle);
        let (wr, hr) = inscribed_rect((src_w - 1) as f64, (src_h - 1) as f64, angle.to_radians());
        RotationMap {
            src_w,
            src_h,
            out_w: (wr + 1e-9).floor() as usize + 1,
            out_h: (hr + 1e-9).floor() as usize + 1,
            sin,
            cos,
            flipped,
        }
    }

    /// Source coordinates `(y, x)` of output pixel `(y, x)`.
    pub fn source(&self, y: usize, x: usize) -> (f64, f64) {
        let u = x as f64 - (self.out_w - 1) as f64 / 2.0;
        let v = y as f64 - (self.out_h - 1) as f64 / 2.0;
        let xs = self.cos * u + self.sin * v + (self.src_w - 1) as f64 / 2.0;
        let ys = -self.sin * u + self.cos * v + (self.src_h - 1) as f64 / 2.0;
        let xs = if self.flipped { (self.src_w - 1) as f64 - xs } else { xs };
        (ys, xs)
    }

    pub fn inside(&self, ys: f64, xs: f64) -> bool {
        (-HULL_SLACK..=(self.src_h - 1) as f64 + HULL_SLACK).contains(&ys)
            && (-HULL_SLACK..=(self.src_w - 1) as f64 + HULL_SLACK).contains(&xs)
    }
}

/// Bilinear tap `(i0, frac)` with `i0 + 1` in range.
fn tap(v: f64, n: usize) -> (usize, f64) {
    if n == 1 {
        return (0, 0.0);
    }
    let v = v.clamp(0.0, (n - 1) as f64);
    let i0 = (v.floor() as usize).min(n - 2);
    (i0, v - i0 as f64)
}

/// Rotates (after an optional horizontal mirror) and crops to the
/// inscribed rectangle. Bands are sampled bilinearly, labels by nearest
/// neighbour.
pub fn rotate_scene(scene: &SceneRaster, angle: f64, flipped: bool) -> Result<SceneRaster> {
    let (w, h) = (scene.width(), scene.height());
    let map = RotationMap::new(w, h, angle, flipped);
    let c = scene.band_count();
    let mut bands = Tensor::zeros(Shape::new(1, c, map.out_h, map.out_w))?;
    let mut labels = vec![0u8; map.out_w * map.out_h];
    let mut invalid = vec![false; map.out_w * map.out_h];
    for y in 0..map.out_h {
        for x in 0..map.out_w {
            let (ys, xs) = map.source(y, x);
            let i = y * map.out_w + x;
            invalid[i] = !map.inside(ys, xs);
            let (y0, fy) = tap(ys, h);
            let (x0, fx) = tap(xs, w);
            let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
            for b in 0..c {
                let p = scene.bands.plane(0, b);
                let top = f64::from(p[y0 * w + x0]) * (1.0 - fx) + f64::from(p[y0 * w + x1]) * fx;
                let bot = f64::from(p[y1 * w + x0]) * (1.0 - fx) + f64::from(p[y1 * w + x1]) * fx;
                bands.set(0, b, y, x, (top * (1.0 - fy) + bot * fy) as f32);
            }
            let (ny, nx) = (
                ys.round().clamp(0.0, (h - 1) as f64) as usize,
                xs.round().clamp(0.0, (w - 1) as f64) as usize,
            );
            labels[i] = scene.labels.get(ny, nx);
            if let Some(m) = &scene.invalid {
                invalid[i] |= m.get(ny, nx);
            }
        }
    }
    let labels = LabelImage::new(map.out_w, map.out_h, labels)?;
    let invalid = IgnoreMask::new(map.out_w, map.out_h, invalid)?;
    Ok(SceneRaster {
        bands,
        labels,
        invalid: (invalid.count() > 0).then_some(invalid),
    })
}

/// Every rotation by multiples of `angle_step`, each with and without a
/// mirror when `flips` is set.
pub fn augment(scene: &SceneRaster, opts: &AugmentOptions) -> Result<AugmentResult> {
    if opts.angle_step == 0 || 360 % opts.angle_step != 0 {
        return Err(Error::Parameter(format!("angle step {} does not divide 360", opts.angle_step)));
    }
    let flips: &[bool] = if opts.flips { &[false, true] } else { &[false] };
    let jobs: Vec<(u32, bool)> = (0..360 / opts.angle_step)
        .flat_map(|k| flips.iter().map(move |&f| (k * opts.angle_step, f)))
        .collect();
    let results: Vec<std::result::Result<Augmentation, (u32, bool, String)>> = jobs
        .par_iter()
        .map(|&(angle, flipped)| {
            let map = RotationMap::new(scene.width(), scene.height(), f64::from(angle), flipped);
            if map.out_w < opts.min_size || map.out_h < opts.min_size {
                return Err((
                    angle,
                    flipped,
                    format!("inscribed rectangle {}x{} is below {}", map.out_w, map.out_h, opts.min_size),
                ));
            }
            rotate_scene(scene, f64::from(angle), flipped)
                .map(|scene| Augmentation { angle, flipped, scene })
                .map_err(|e| (angle, flipped, e.to_string()))
        })
        .collect();
    let mut out = AugmentResult {
        outputs: Vec::new(),
        skipped: Vec::new(),
    };
    for r in results {
        match r {
            Ok(a) => out.outputs.push(a),
            Err(skip) => {
                log::warn!("skipping rotation {} (flipped: {}): {}", skip.0, skip.1, skip.2);
                out.skipped.push(skip);
            }
        }
    }
    Ok(out)
}
