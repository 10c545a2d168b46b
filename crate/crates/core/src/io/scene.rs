use std::path::Path;

use image::{Rgb, RgbImage};

use super::dsm::{read_dsm_file, write_dsm_file, DsmRaster};
use super::palette::{read_labels_png, write_labels_png};
use crate::error::{Error, Result};
use crate::pipeline::SceneRaster;
use crate::tensor::{Shape, Tensor};

pub const SCENE_IMAGE_FILE: &str = "scene.png";
pub const SCENE_DSM_FILE: &str = "scene.dsm";
pub const LABELS_FILE: &str = "labels.png";

/// Writes the first three bands as an 8-bit RGB image (rounded and
/// clamped), an optional fourth band as an elevation raster, and the
/// labels as a palette image.
pub fn write_scene(dir: &Path, scene: &SceneRaster) -> Result<()> {
    let c = scene.band_count();
    if !(3..=4).contains(&c) {
        return Err(Error::Parameter(format!("scene directories hold 3 or 4 bands, not {c}")));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (w, h) = (scene.width(), scene.height());
    let img = RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let px = |b| scene.bands.at(0, b, y as usize, x as usize).round().clamp(0.0, 255.0) as u8;
        Rgb([px(0), px(1), px(2)])
    });
    img.save_with_format(dir.join(SCENE_IMAGE_FILE), image::ImageFormat::Png)?;
    if c == 4 {
        let dsm = DsmRaster {
            width: w,
            height: h,
            data: scene.bands.plane(0, 3).to_vec(),
        };
        write_dsm_file(&dir.join(SCENE_DSM_FILE), &dsm)?;
    }
    write_labels_png(&dir.join(LABELS_FILE), &scene.labels)
}

/// Reads a scene directory; the elevation band is present when
/// `scene.dsm` exists.
pub fn read_scene(dir: &Path) -> Result<SceneRaster> {
    let img = image::open(dir.join(SCENE_IMAGE_FILE))?.to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let dsm_path = dir.join(SCENE_DSM_FILE);
    let dsm = if dsm_path.exists() {
        let d = read_dsm_file(&dsm_path)?;
        if (d.width, d.height) != (w, h) {
            return Err(Error::dim(
                "extent",
                format!("image is {w}x{h}, elevation {}x{}", d.width, d.height),
            ));
        }
        Some(d)
    } else {
        None
    };
    let c = 3 + usize::from(dsm.is_some());
    let bands = Tensor::from_fn(Shape::new(1, c, h, w), |_, b, y, x| match b {
        0..=2 => f32::from(img.get_pixel(x as u32, y as u32).0[b]),
        _ => dsm.as_ref().expect("fourth band only with elevation").data[y * w + x],
    })?;
    let labels = read_labels_png(&dir.join(LABELS_FILE))?;
    SceneRaster::new(bands, labels)
}
