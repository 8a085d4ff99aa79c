//! File encodings: Middlebury `.flo`, 8-bit mask/frame images and track JSON.

mod flo;
mod images;
mod tracks;

pub use flo::{decode_flo, encode_flo, read_flo, write_flo, FLO_MAGIC};
pub use images::{read_frame, read_mask, read_video_dir, write_frame, write_mask, write_rgb};
pub use tracks::{read_queries, read_tracks, tracks_from_json, tracks_to_json, write_queries, write_tracks};

use std::fs;
use std::path::Path;

use crate::error::{DotError, Result};

/// Write through a temporary sibling and rename into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(match path.extension() {
        Some(ext) => format!("{}.tmp", ext.to_string_lossy()),
        None => "tmp".to_string(),
    });
    fs::write(&tmp, bytes).map_err(|e| DotError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| DotError::io(path, e))
}
