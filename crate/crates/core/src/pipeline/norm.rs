use std::fmt::Write as _;

use super::scene::SceneRaster;
use crate::error::{Error, Result};

/// Per-band means of the training pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct BandMeans {
    pub means: Vec<f64>,
}

impl BandMeans {
    /// Subtracts the means in place.
    pub fn apply(&self, scene: &mut SceneRaster) -> Result<()> {
        let s = scene.bands.shape();
        if s.c != self.means.len() {
            return Err(Error::dim("channels", format!("{} means for {} bands", self.means.len(), s.c)));
        }
        for (c, &m) in self.means.iter().enumerate() {
            for v in scene.bands.plane_mut(0, c) {
                *v = (f64::from(*v) - m) as f32;
            }
        }
        Ok(())
    }

    /// One `band.<i>=<mean>` line per band; values round-trip exactly.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, m) in self.means.iter().enumerate() {
            writeln!(out, "band.{i}={m:?}").expect("writing to a string");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut means = Vec::new();
        for (i, line) in text.lines().map(str::trim).filter(|l| !l.is_empty()).enumerate() {
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Syntax { line: i + 1, detail: "expected `band.<i>=<mean>`".into() })?;
            if key != format!("band.{i}") {
                return Err(Error::Syntax {
                    line: i + 1,
                    detail: format!("expected key `band.{i}`, got `{key}`"),
                });
            }
            means.push(value.parse().map_err(|_| Error::Syntax {
                line: i + 1,
                detail: format!("`{value}` is not a number"),
            })?);
        }
        Ok(BandMeans { means })
    }
}

/// Computes per-band means over every pixel of `scenes` and subtracts them.
pub fn mean_subtract(scenes: &mut [SceneRaster]) -> Result<BandMeans> {
    let first = scenes.first().ok_or_else(|| Error::Data("no scenes to normalise".into()))?;
    let c = first.band_count();
    if scenes.iter().any(|s| s.band_count() != c) {
        return Err(Error::dim("channels", "scenes have different band counts"));
    }
    let mut sums = vec![0.0f64; c];
    let mut count = 0usize;
    for s in scenes.iter() {
        for (b, sum) in sums.iter_mut().enumerate() {
            *sum += s.bands.plane(0, b).iter().map(|&v| f64::from(v)).sum::<f64>();
        }
        count += s.width() * s.height();
    }
    let means = BandMeans {
        means: sums.into_iter().map(|s| s / count as f64).collect(),
    };
    for s in scenes.iter_mut() {
        means.apply(s)?;
    }
    Ok(means)
}
