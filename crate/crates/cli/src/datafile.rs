//! Raw tensor files.
//!
//! Layout (all integers little-endian):
//!
//! | offset | size | field                             |
//! |--------|------|-----------------------------------|
//! | 0      | 4    | magic `NPFD`                      |
//! | 4      | 1    | dtype tag                         |
//! | 5      | 1    | rank (1 or 2)                     |
//! | 6      | 2    | reserved, zero                    |
//! | 8      | 4    | extent 0                          |
//! | 12     | 4    | extent 1 (zero for rank 1)        |
//! | 16     | n    | row-major element data            |

use std::path::Path;

use anyhow::{bail, Context, Result};
use npuflow::ir::{DType, TensorType};
use npuflow::reference::HostTensor;

pub const MAGIC: &[u8; 4] = b"NPFD";
pub const HEADER_BYTES: usize = 16;

pub fn encode(t: &HostTensor) -> Vec<u8> {
    let shape = t.ty().shape();
    let mut out = Vec::with_capacity(HEADER_BYTES + t.bytes().len());
    out.extend_from_slice(MAGIC);
    out.push(t.dtype().tag());
    out.push(shape.len() as u8);
    out.extend_from_slice(&[0, 0]);
    for k in 0..2 {
        out.extend_from_slice(&(shape.get(k).copied().unwrap_or(0) as u32).to_le_bytes());
    }
    out.extend_from_slice(t.bytes());
    out
}

pub fn decode(bytes: &[u8]) -> Result<HostTensor> {
    if bytes.len() < HEADER_BYTES || &bytes[..4] != MAGIC {
        bail!("not a tensor file (missing NPFD header)");
    }
    let dtype = DType::from_tag(bytes[4]).with_context(|| format!("unknown dtype tag {}", bytes[4]))?;
    let rank = bytes[5] as usize;
    let ext = |k: usize| u32::from_le_bytes(bytes[8 + 4 * k..12 + 4 * k].try_into().unwrap()) as usize;
    let shape = match rank {
        1 => vec![ext(0)],
        2 => vec![ext(0), ext(1)],
        r => bail!("unsupported rank {r}"),
    };
    let ty = TensorType::new(shape, dtype).map_err(anyhow::Error::msg)?;
    Ok(HostTensor::new(ty, bytes[HEADER_BYTES..].to_vec())?)
}

pub fn read(path: &Path) -> Result<HostTensor> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    decode(&bytes).with_context(|| format!("in {}", path.display()))
}

pub fn write(path: &Path, t: &HostTensor) -> Result<()> {
    std::fs::write(path, encode(t)).with_context(|| format!("writing {}", path.display()))
}
