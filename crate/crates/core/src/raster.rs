//! Per-pixel label and mask rasters.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Class index per pixel, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl LabelImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::dim(
                "data",
                format!("{} labels for a {width}x{height} raster", data.len()),
            ));
        }
        Ok(LabelImage { width, height, data })
    }

    pub fn filled(width: usize, height: usize, label: u8) -> Self {
        LabelImage {
            width,
            height,
            data: vec![label; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> u8) -> Self {
        let data = (0..height)
            .flat_map(|y| (0..width).map(move |x| (y, x)))
            .map(|(y, x)| f(y, x))
            .collect();
        LabelImage { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> u8 {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, y: usize, x: usize, v: u8) {
        self.data[y * self.width + x] = v;
    }

    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> LabelImage {
        LabelImage::from_fn(w, h, |y, x| self.get(y0 + y, x0 + x))
    }

    /// Pixel count per class for classes `0..classes`; labels beyond are ignored.
    pub fn histogram(&self, classes: usize) -> Vec<usize> {
        let mut h = vec![0; classes];
        for &l in &self.data {
            if let Some(slot) = h.get_mut(l as usize) {
                *slot += 1;
            }
        }
        h
    }

    /// Arg-max over channels of item `n` of a probability tensor. Ties go to
    /// the lower class index.
    pub fn argmax<T: Scalar>(probs: &Tensor<T>, n: usize) -> Result<LabelImage> {
        let s = probs.shape();
        if s.c == 0 || s.c > 256 {
            return Err(Error::dim("channels", format!("cannot take arg-max over {} classes", s.c)));
        }
        if n >= s.n {
            return Err(Error::dim("batch", format!("item {n} of {}", s.n)));
        }
        Ok(LabelImage::from_fn(s.w, s.h, |y, x| {
            let mut best = 0;
            for c in 1..s.c {
                if probs.at(n, c, y, x) > probs.at(n, best, y, x) {
                    best = c;
                }
            }
            best as u8
        }))
    }
}

/// Boolean raster; `true` excludes a pixel from loss and metrics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IgnoreMask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl IgnoreMask {
    pub fn none(width: usize, height: usize) -> Self {
        IgnoreMask {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::dim(
                "data",
                format!("{} mask entries for a {width}x{height} raster", data.len()),
            ));
        }
        Ok(IgnoreMask { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let data = (0..height)
            .flat_map(|y| (0..width).map(move |x| (y, x)))
            .map(|(y, x)| f(y, x))
            .collect();
        IgnoreMask { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&m| m).count()
    }

    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> IgnoreMask {
        IgnoreMask::from_fn(w, h, |y, x| self.get(y0 + y, x0 + x))
    }

    pub fn union(&self, other: &IgnoreMask) -> Result<IgnoreMask> {
        self.check_extent(other.width, other.height)?;
        Ok(IgnoreMask {
            width: self.width,
            height: self.height,
            data: self.data.iter().zip(&other.data).map(|(a, b)| *a || *b).collect(),
        })
    }

    /// `true` when every masked pixel of `self` is also masked in `other`.
    pub fn is_subset_of(&self, other: &IgnoreMask) -> bool {
        self.data.iter().zip(&other.data).all(|(a, b)| !*a || *b)
    }

    pub(crate) fn check_extent(&self, width: usize, height: usize) -> Result<()> {
        if self.width != width {
            return Err(Error::dim("width", format!("mask {} vs raster {width}", self.width)));
        }
        if self.height != height {
            return Err(Error::dim("height", format!("mask {} vs raster {height}", self.height)));
        }
        Ok(())
    }
}
