use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{DotError, Result};
use crate::types::{TrackPoint, TrackSet, TrackSource};

/// On-disk layout: `{"T": int, "tracks": [[[x, y, v], ...], ...]}`.
#[derive(Serialize, Deserialize)]
struct TrackFile {
    #[serde(rename = "T")]
    num_frames: usize,
    tracks: Vec<Vec<[f64; 3]>>,
}

pub fn tracks_to_json(tracks: &TrackSet) -> String {
    let file = TrackFile {
        num_frames: tracks.num_frames(),
        tracks: tracks
            .tracks()
            .iter()
            .map(|tr| {
                tr.iter()
                    .map(|p| [p.x as f64, p.y as f64, if p.visible { 1.0 } else { 0.0 }])
                    .collect()
            })
            .collect(),
    };
    serde_json::to_string(&file).expect("track file serializes")
}

pub fn tracks_from_json(text: &str, source: TrackSource) -> Result<TrackSet> {
    let file: TrackFile = serde_json::from_str(text)?;
    let mut tracks = Vec::with_capacity(file.tracks.len());
    for tr in file.tracks {
        let mut pts = Vec::with_capacity(tr.len());
        for [x, y, v] in tr {
            let visible = match v {
                1.0 => true,
                0.0 => false,
                other => {
                    return Err(DotError::Invalid(format!(
                        "visibility flag must be 0 or 1, got {other}"
                    )))
                }
            };
            pts.push(TrackPoint::new(x as f32, y as f32, visible));
        }
        tracks.push(pts);
    }
    TrackSet::new(file.num_frames, tracks, source)
}

pub fn write_tracks(tracks: &TrackSet, path: impl AsRef<Path>) -> Result<()> {
    super::write_atomic(path.as_ref(), tracks_to_json(tracks).as_bytes())
}

pub fn read_tracks(path: impl AsRef<Path>, source: TrackSource) -> Result<TrackSet> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| DotError::io(path, e))?;
    tracks_from_json(&text, source)
}

/// Query file for external trackers: a JSON list of `[x, y]`.
pub fn write_queries(queries: &[(f32, f32)], path: impl AsRef<Path>) -> Result<()> {
    let list: Vec<[f64; 2]> = queries.iter().map(|&(x, y)| [x as f64, y as f64]).collect();
    super::write_atomic(path.as_ref(), serde_json::to_string(&list)?.as_bytes())
}

pub fn read_queries(path: impl AsRef<Path>) -> Result<Vec<(f32, f32)>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| DotError::io(path, e))?;
    let list: Vec<[f64; 2]> = serde_json::from_str(&text)?;
    Ok(list.into_iter().map(|[x, y]| (x as f32, y as f32)).collect())
}
