use crate::error::{Error, Result};
use crate::net::{Inputs, NetworkSpec};
use crate::raster::{IgnoreMask, LabelImage};
use crate::tensor::{Shape, Tensor};

/// Co-registered bands and labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneRaster {
    /// `1 x C x H x W`.
    pub bands: Tensor<f32>,
    pub labels: LabelImage,
    /// Pixels with no source data; `None` when all are valid.
    pub invalid: Option<IgnoreMask>,
}

impl SceneRaster {
    pub fn new(bands: Tensor<f32>, labels: LabelImage) -> Result<Self> {
        let scene = SceneRaster {
            bands,
            labels,
            invalid: None,
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.bands.shape();
        if s.n != 1 {
            return Err(Error::dim("batch", format!("scene bands must have batch 1, got {}", s.n)));
        }
        if (self.labels.height(), self.labels.width()) != (s.h, s.w) {
            return Err(Error::dim(
                "extent",
                format!("bands are {}x{}, labels {}x{}", s.h, s.w, self.labels.height(), self.labels.width()),
            ));
        }
        if let Some(m) = &self.invalid {
            m.check_extent(s.w, s.h)?;
        }
        if self.bands.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("scene bands contain non-finite values".into()));
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.bands.shape().w
    }

    pub fn height(&self) -> usize {
        self.bands.shape().h
    }

    pub fn band_count(&self) -> usize {
        self.bands.shape().c
    }

    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> Result<SceneRaster> {
        Ok(SceneRaster {
            bands: self.bands.crop(y0, x0, h, w)?,
            labels: self.labels.crop(y0, x0, h, w),
            invalid: self.invalid.as_ref().map(|m| m.crop(y0, x0, h, w)),
        })
    }

    /// Bands split across the network's input branches: branches take
    /// consecutive bands in declaration order.
    pub fn inputs(&self, net: &NetworkSpec) -> Result<Inputs<f32>> {
        split_branches(&self.bands, net)
    }
}

pub(crate) fn split_branches(bands: &Tensor<f32>, net: &NetworkSpec) -> Result<Inputs<f32>> {
    let branches = net.input_branches();
    let needed: usize = branches.iter().map(|(_, c)| c).sum();
    if needed != bands.shape().c {
        return Err(Error::dim(
            "channels",
            format!("network inputs take {needed} bands, scene has {}", bands.shape().c),
        ));
    }
    let mut c0 = 0;
    let mut out = Inputs::new();
    for (name, c) in branches {
        out.insert(name.to_string(), bands.channels(c0, c)?);
        c0 += c;
    }
    Ok(out)
}

/// Empty single-band scene, handy for tests.
#[allow(dead_code)]
pub(crate) fn blank(width: usize, height: usize, bands: usize) -> SceneRaster {
    SceneRaster {
        bands: Tensor::zeros(Shape::new(1, bands, height, width)).expect("positive extent"),
        labels: LabelImage::filled(width, height, 0),
        invalid: None,
    }
}
