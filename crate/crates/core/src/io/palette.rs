use std::path::Path;

use image::{Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::raster::LabelImage;

/// Colour of each class: impervious, building, low vegetation, tree, car,
/// clutter/unknown.
pub const PALETTE: [[u8; 3]; 6] = [
    [255, 255, 255],
    [0, 0, 255],
    [0, 255, 255],
    [0, 255, 0],
    [255, 255, 0],
    [255, 0, 0],
];

pub fn encode_labels(labels: &LabelImage) -> Result<RgbImage> {
    let mut img = RgbImage::new(labels.width() as u32, labels.height() as u32);
    for y in 0..labels.height() {
        for x in 0..labels.width() {
            let l = labels.get(y, x);
            let colour = PALETTE
                .get(l as usize)
                .ok_or_else(|| Error::Data(format!("label {l} at ({y}, {x}) has no palette colour")))?;
            img.put_pixel(x as u32, y as u32, Rgb(*colour));
        }
    }
    Ok(img)
}

pub fn decode_labels(img: &RgbImage) -> Result<LabelImage> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut data = Vec::with_capacity(w * h);
    for (x, y, px) in img.enumerate_pixels() {
        let l = PALETTE.iter().position(|c| *c == px.0).ok_or_else(|| {
            Error::Data(format!(
                "colour ({}, {}, {}) at ({y}, {x}) is not in the label palette",
                px.0[0], px.0[1], px.0[2]
            ))
        })?;
        data.push(l as u8);
    }
    LabelImage::new(w, h, data)
}

pub fn write_labels_png(path: &Path, labels: &LabelImage) -> Result<()> {
    encode_labels(labels)?.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

pub fn read_labels_png(path: &Path) -> Result<LabelImage> {
    let img = image::open(path)?.to_rgb8();
    decode_labels(&img)
}
