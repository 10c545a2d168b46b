use std::path::Path;

use super::{read_file, write_file, Reader};
use crate::error::{Error, Result};
use crate::net::{ConvWeights, NetworkSpec, WeightStore};
use crate::tensor::{Shape, Tensor};

pub const WEIGHTS_MAGIC: &[u8; 4] = b"FCNW";
pub const WEIGHTS_VERSION: u32 = 1;

fn u32_of(v: usize, what: &str) -> Result<[u8; 4]> {
    u32::try_from(v)
        .map(u32::to_le_bytes)
        .map_err(|_| Error::Parameter(format!("{what} {v} does not fit in 32 bits")))
}

/// Header (`FCNW`, version, layer count), then per layer in store order:
/// name length and UTF-8 bytes, kernel shape as four u32, kernel values,
/// bias values.
pub fn weights_save(w: &WeightStore<f32>) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(12 + 4 * w.param_count());
    out.extend_from_slice(WEIGHTS_MAGIC);
    out.extend_from_slice(&WEIGHTS_VERSION.to_le_bytes());
    out.extend_from_slice(&u32_of(w.len(), "layer count")?);
    for (name, cw) in w.iter() {
        out.extend_from_slice(&u32_of(name.len(), "name length")?);
        out.extend_from_slice(name.as_bytes());
        for d in cw.kernel.shape().as_array() {
            out.extend_from_slice(&u32_of(d, "kernel extent")?);
        }
        if cw.bias.len() != cw.kernel.shape().n {
            return Err(Error::semantic(name, "bias count differs from the kernel's output channels"));
        }
        for v in cw.kernel.data().iter().chain(&cw.bias) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn weights_load(bytes: &[u8]) -> Result<WeightStore<f32>> {
    let mut r = Reader::new(bytes, "weight file");
    if r.take(4)? != WEIGHTS_MAGIC {
        return Err(Error::Format("weight file does not start with `FCNW`".into()));
    }
    let version = r.u32()?;
    if version != WEIGHTS_VERSION {
        return Err(Error::Format(format!(
            "weight file version {version}, this build reads version {WEIGHTS_VERSION}"
        )));
    }
    let count = r.u32()?;
    let mut store = WeightStore::new();
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Format("layer name is not UTF-8".into()))?
            .to_string();
        let dims = [r.u32()?, r.u32()?, r.u32()?, r.u32()?].map(|d| d as usize);
        let shape = Shape::new(dims[0], dims[1], dims[2], dims[3]);
        let kernel = Tensor::from_vec(shape, r.f32s(shape.len())?)
            .map_err(|e| Error::Format(format!("layer `{name}`: {e}")))?;
        let bias = r.f32s(shape.n)?;
        if store.get(&name).is_some() {
            return Err(Error::Format(format!("layer `{name}` appears twice")));
        }
        store.insert(name, ConvWeights { kernel, bias });
    }
    r.finish()?;
    Ok(store)
}

pub fn save_weights_file(path: &Path, w: &WeightStore<f32>) -> Result<()> {
    write_file(path, &weights_save(w)?)
}

/// Loads weights and checks them against `net` when given.
pub fn load_weights_file(path: &Path, net: Option<&NetworkSpec>) -> Result<WeightStore<f32>> {
    let w = weights_load(&read_file(path)?)?;
    if let Some(net) = net {
        w.validate(net)?;
    }
    Ok(w)
}
