use std::fs;
use std::path::Path;

use crate::error::{DotError, Result};
use crate::types::{FlowField, Resolution};

/// Leading tag of a Middlebury flow file.
pub const FLO_MAGIC: &[u8; 4] = b"PIEH";

pub fn encode_flo(flow: &FlowField) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + flow.data.len() * 4);
    out.extend_from_slice(FLO_MAGIC);
    out.extend_from_slice(&(flow.width as u32).to_le_bytes());
    out.extend_from_slice(&(flow.height as u32).to_le_bytes());
    for v in &flow.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_flo(bytes: &[u8], path: &Path) -> Result<FlowField> {
    if bytes.len() < 12 {
        return Err(DotError::format(path, "file shorter than the 12-byte header"));
    }
    if &bytes[..4] != FLO_MAGIC {
        return Err(DotError::format(path, "bad magic tag"));
    }
    let width = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let height = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| DotError::format(path, "dimensions overflow"))?;
    let payload = &bytes[12..];
    if payload.len() != expected {
        return Err(DotError::format(
            path,
            format!("payload has {} bytes, expected {expected}", payload.len()),
        ));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(FlowField {
        height,
        width,
        data,
        resolution: Resolution::Fine,
    })
}

pub fn write_flo(flow: &FlowField, path: impl AsRef<Path>) -> Result<()> {
    super::write_atomic(path.as_ref(), &encode_flo(flow))
}

pub fn read_flo(path: impl AsRef<Path>) -> Result<FlowField> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| DotError::io(path, e))?;
    decode_flo(&bytes, path)
}
