use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Scene;
use crate::error::{DotError, Result};
use crate::io::{write_atomic, write_flo, write_frame, write_mask, write_tracks};

/// What to materialize for each scene directory.
#[derive(Debug, Clone)]
pub struct DatasetLayout {
    /// Frame pairs `(s, t)` with ground-truth flow and visibility on disk.
    pub pairs: Vec<(usize, usize)>,
    /// Number of ground-truth tracks (queried at frame 0) in `gt/tracks.json`.
    pub num_tracks: usize,
}

impl DatasetLayout {
    /// First frame to every other frame, plus last-to-first for backward checks.
    pub fn anchored(num_frames: usize, num_tracks: usize) -> Self {
        let last = num_frames - 1;
        let mut pairs: Vec<_> = (1..num_frames).map(|t| (0, t)).collect();
        pairs.push((last, 0));
        DatasetLayout { pairs, num_tracks }
    }
}

/// Writes `scene_<seed>/{frames,gt}` plus `spec.json` under `root`.
pub fn write_scene_dir(scene: &Scene, root: &Path, layout: &DatasetLayout) -> Result<PathBuf> {
    let spec = scene.spec();
    let dir = root.join(format!("scene_{}", spec.seed));
    let frames_dir = dir.join("frames");
    let gt_dir = dir.join("gt");
    for d in [&frames_dir, &gt_dir] {
        fs::create_dir_all(d).map_err(|e| DotError::io(d, e))?;
    }
    for (t, frame) in scene.video().frames().iter().enumerate() {
        write_frame(frame, frames_dir.join(format!("{t:04}.png")))?;
    }
    for &(s, t) in &layout.pairs {
        let (flow, vis) = scene.ground_truth_pair(s, t)?;
        write_flo(&flow, gt_dir.join(format!("flow_{s}_{t}.flo")))?;
        write_mask(&vis, gt_dir.join(format!("vis_{s}_{t}.png")))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x7472_6163_6b73);
    let queries: Vec<(f32, f32)> = (0..layout.num_tracks)
        .map(|_| {
            (
                rng.random_range(0..spec.width) as f32,
                rng.random_range(0..spec.height) as f32,
            )
        })
        .collect();
    if !queries.is_empty() {
        let tracks = scene.ground_truth_tracks(&queries, 0, None)?;
        write_tracks(&tracks, gt_dir.join("tracks.json"))?;
    }
    write_atomic(&dir.join("spec.json"), serde_json::to_string_pretty(spec)?.as_bytes())?;
    Ok(dir)
}
