//! On-disk formats. Multi-byte integers and floats are little-endian.

mod dsm;
mod palette;
mod scene;
mod weights;

pub use dsm::{dsm_read, dsm_write, read_dsm_file, write_dsm_file, DsmRaster, DSM_MAGIC};
pub use palette::{decode_labels, encode_labels, read_labels_png, write_labels_png, PALETTE};
pub use scene::{read_scene, write_scene, LABELS_FILE, SCENE_DSM_FILE, SCENE_IMAGE_FILE};
pub use weights::{load_weights_file, save_weights_file, weights_load, weights_save, WEIGHTS_MAGIC, WEIGHTS_VERSION};

use std::path::Path;

use crate::error::{Error, Result};

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Little-endian cursor over a byte slice; running out is a format error.
pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    what: &'static str,
}

impl<'a> Reader<'a> {
    pub fn new(bytes: &'a [u8], what: &'static str) -> Self {
        Reader { bytes, what }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() < n {
            return Err(Error::Format(format!(
                "{} is truncated: needed {n} more bytes, {} left",
                self.what,
                self.bytes.len()
            )));
        }
        let (head, tail) = self.bytes.split_at(n);
        self.bytes = tail;
        Ok(head)
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let len = n
            .checked_mul(4)
            .ok_or_else(|| Error::Format(format!("{} declares an impossible length", self.what)))?;
        Ok(self
            .take(len)?
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect())
    }

    pub fn finish(&self) -> Result<()> {
        if self.bytes.is_empty() {
            Ok(())
        } else {
            Err(Error::Format(format!("{} has {} trailing bytes", self.what, self.bytes.len())))
        }
    }
}
