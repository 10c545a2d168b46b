use std::path::Path;

use super::{read_file, write_file, Reader};
use crate::error::{Error, Result};

pub const DSM_MAGIC: &[u8; 4] = b"DSM1";

/// Single-band elevation raster, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DsmRaster {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

/// `DSM1`, width and height as u32, then the samples as f32.
pub fn dsm_write(dsm: &DsmRaster) -> Result<Vec<u8>> {
    if dsm.data.len() != dsm.width * dsm.height {
        return Err(Error::dim("data", format!("{} samples for {}x{}", dsm.data.len(), dsm.width, dsm.height)));
    }
    let (w, h) = match (u32::try_from(dsm.width), u32::try_from(dsm.height)) {
        (Ok(w), Ok(h)) => (w, h),
        _ => return Err(Error::Parameter("raster extent does not fit in 32 bits".into())),
    };
    let mut out = Vec::with_capacity(12 + 4 * dsm.data.len());
    out.extend_from_slice(DSM_MAGIC);
    out.extend_from_slice(&w.to_le_bytes());
    out.extend_from_slice(&h.to_le_bytes());
    for v in &dsm.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn dsm_read(bytes: &[u8]) -> Result<DsmRaster> {
    let mut r = Reader::new(bytes, "elevation raster");
    if r.take(4)? != DSM_MAGIC {
        return Err(Error::Format("elevation raster does not start with `DSM1`".into()));
    }
    let width = r.u32()? as usize;
    let height = r.u32()? as usize;
    let data = r.f32s(width * height)?;
    r.finish()?;
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::Data(format!(
            "elevation at ({}, {}) is not finite",
            i / width.max(1),
            i % width.max(1)
        )));
    }
    Ok(DsmRaster { width, height, data })
}

pub fn write_dsm_file(path: &Path, dsm: &DsmRaster) -> Result<()> {
    write_file(path, &dsm_write(dsm)?)
}

pub fn read_dsm_file(path: &Path) -> Result<DsmRaster> {
    dsm_read(&read_file(path)?)
}
