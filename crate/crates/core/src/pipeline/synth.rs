use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::scene::SceneRaster;
use crate::error::{Error, Result};
use crate::raster::LabelImage;
use crate::tensor::{Shape, Tensor};

/// Band order of generated scenes: three colour-infrared bands and a
/// normalised surface height in metres.
pub const SYNTH_BANDS: [&str; 4] = ["IR", "R", "G", "DSM"];

const IMPERVIOUS: u8 = 0;
const BUILDING: u8 = 1;
const LOW_VEG: u8 = 2;
const TREE: u8 = 3;
const CAR: u8 = 4;

/// Mean (IR, R, G) per class.
const COLOURS: [[f32; 3]; 5] = [
    [115.0, 120.0, 125.0],
    [150.0, 175.0, 150.0],
    [205.0, 105.0, 125.0],
    [165.0, 60.0, 85.0],
    [70.0, 215.0, 45.0],
];

/// Fraction of the scene the car class is grown to.
const CAR_TARGET: f64 = 0.01;

struct Canvas {
    size: usize,
    labels: Vec<u8>,
    height: Vec<f32>,
    /// Per-pixel colour offset shared by one object.
    tint: Vec<f32>,
}

impl Canvas {
    fn paint(&mut self, y: usize, x: usize, label: u8, h: f32, tint: f32) {
        let i = y * self.size + x;
        self.labels[i] = label;
        self.height[i] = h;
        self.tint[i] = tint;
    }
}

/// Deterministic scene of roads, lawns, buildings, trees and cars.
/// Buildings and trees are elevated; cars are small and cover about 1% of
/// the area.
pub fn synth_scene(seed: u64, size: usize) -> Result<SceneRaster> {
    if size < 128 {
        return Err(Error::Parameter(format!("synthetic scenes need a size of at least 128, got {size}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = size * size;
    let mut cv = Canvas {
        size,
        labels: vec![IMPERVIOUS; n],
        height: vec![0.0; n],
        tint: vec![0.0; n],
    };
    let area = n as f64;
    let scaled = |per_64k: f64| ((area / 65536.0) * per_64k).ceil() as usize;

    // Lawns: axis-aligned ellipses.
    for _ in 0..scaled(9.0) {
        let (cy, cx) = (rng.gen_range(0..size) as f64, rng.gen_range(0..size) as f64);
        let (ry, rx) = (rng.gen_range(12.0..36.0), rng.gen_range(12.0..36.0));
        let tint = rng.gen_range(-12.0..12.0);
        for y in 0..size {
            for x in 0..size {
                let (dy, dx) = ((y as f64 - cy) / ry, (x as f64 - cx) / rx);
                if dy * dy + dx * dx <= 1.0 {
                    cv.paint(y, x, LOW_VEG, 0.1, tint);
                }
            }
        }
    }
    // Roads: full-length strips.
    for k in 0..scaled(2.0) {
        let width = rng.gen_range(14..22);
        let at = rng.gen_range(0..size - width);
        for a in 0..size {
            for b in at..at + width {
                let (y, x) = if k % 2 == 0 { (b, a) } else { (a, b) };
                cv.paint(y, x, IMPERVIOUS, 0.0, 0.0);
            }
        }
    }
    // Buildings: flat-roofed rectangles.
    for _ in 0..scaled(7.0) {
        let (h, w) = (rng.gen_range(20..48), rng.gen_range(20..48));
        let (y0, x0) = (rng.gen_range(0..size - h), rng.gen_range(0..size - w));
        let roof = rng.gen_range(6.0..12.0);
        let tint = rng.gen_range(-15.0..15.0);
        for y in y0..y0 + h {
            for x in x0..x0 + w {
                cv.paint(y, x, BUILDING, roof, tint);
            }
        }
    }
    // Trees: domes.
    for _ in 0..scaled(14.0) {
        let (cy, cx) = (rng.gen_range(0..size) as f64, rng.gen_range(0..size) as f64);
        let r = rng.gen_range(6.0..13.0);
        let top = rng.gen_range(5.0..11.0);
        let tint = rng.gen_range(-10.0..10.0);
        for y in 0..size {
            for x in 0..size {
                let d2 = ((y as f64 - cy).powi(2) + (x as f64 - cx).powi(2)) / (r * r);
                if d2 <= 1.0 {
                    cv.paint(y, x, TREE, (top * (1.0 - 0.5 * d2)) as f32, tint);
                }
            }
        }
    }
    // Cars on open impervious ground, at least 10 px across so their centres
    // survive a 3-pixel boundary band.
    let mut car_pixels = 0usize;
    let mut attempts = 0;
    while (car_pixels as f64) < CAR_TARGET * area && attempts < 20_000 {
        attempts += 1;
        let (long, short) = (rng.gen_range(16..21), rng.gen_range(10..12));
        let (h, w) = if rng.gen_bool(0.5) { (long, short) } else { (short, long) };
        let (y0, x0) = (rng.gen_range(1..size - h - 1), rng.gen_range(1..size - w - 1));
        let clear = (y0 - 1..y0 + h + 1).all(|y| (x0 - 1..x0 + w + 1).all(|x| cv.labels[y * size + x] == IMPERVIOUS));
        if !clear {
            continue;
        }
        let tint = rng.gen_range(-20.0..20.0);
        for y in y0..y0 + h {
            for x in x0..x0 + w {
                cv.paint(y, x, CAR, 1.5, tint);
            }
        }
        car_pixels += h * w;
    }

    let optical = Normal::new(0.0f32, 8.0).expect("valid sigma");
    let elevation = Normal::new(0.0f32, 0.15).expect("valid sigma");
    let mut bands = Tensor::zeros(Shape::new(1, 4, size, size))?;
    for i in 0..n {
        let (y, x) = (i / size, i % size);
        let colour = COLOURS[cv.labels[i] as usize];
        for (c, &mean) in colour.iter().enumerate() {
            let v = mean + cv.tint[i] + optical.sample(&mut rng);
            bands.set(0, c, y, x, v.round().clamp(0.0, 255.0));
        }
        bands.set(0, 3, y, x, cv.height[i] + elevation.sample(&mut rng));
    }
    let labels = LabelImage::new(size, size, cv.labels)?;
    let hist = labels.histogram(5);
    log::info!(
        "synthetic scene {size}x{size} seed {seed}: class fractions {:?}",
        hist.iter().map(|&h| format!("{:.4}", h as f64 / area)).collect::<Vec<_>>()
    );
    SceneRaster::new(bands, labels)
}
