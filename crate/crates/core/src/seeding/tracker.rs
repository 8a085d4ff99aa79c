use std::path::PathBuf;

use crate::error::{DotError, Result};
use crate::io::{read_tracks, write_queries};
use crate::synthgen::{CorruptionSpec, Scene};
use crate::types::{TrackSet, TrackSource, Video};

/// Anything that turns query points at the first frame into full tracks.
pub trait PointTracker {
    fn name(&self) -> &str;
    fn track(&self, video: &Video, queries: &[(f32, f32)]) -> Result<TrackSet>;
}

/// Exact trajectories from a synthetic scene's oracle.
pub struct GroundTruthTracker<'a> {
    pub scene: &'a Scene,
}

impl PointTracker for GroundTruthTracker<'_> {
    fn name(&self) -> &str {
        "gt"
    }

    fn track(&self, _video: &Video, queries: &[(f32, f32)]) -> Result<TrackSet> {
        self.scene.ground_truth_tracks(queries, 0, None)
    }
}

/// Oracle trajectories with position jitter and visibility flips.
pub struct CorruptedTracker<'a> {
    pub scene: &'a Scene,
    pub corruption: CorruptionSpec,
}

impl PointTracker for CorruptedTracker<'_> {
    fn name(&self) -> &str {
        "gt-corrupt"
    }

    fn track(&self, _video: &Video, queries: &[(f32, f32)]) -> Result<TrackSet> {
        self.scene.ground_truth_tracks(queries, 0, Some(&self.corruption))
    }
}

/// Tracks produced offline by a third-party tool.
///
/// If `queries_out` is set the queries are written there (JSON list of
/// `[x, y]`) for the external tool; the tracks are read from `tracks_path`.
pub struct ExternalTracker {
    pub tracks_path: PathBuf,
    pub queries_out: Option<PathBuf>,
}

impl PointTracker for ExternalTracker {
    fn name(&self) -> &str {
        "external"
    }

    fn track(&self, _video: &Video, queries: &[(f32, f32)]) -> Result<TrackSet> {
        if let Some(q) = &self.queries_out {
            write_queries(queries, q)?;
        }
        read_tracks(&self.tracks_path, TrackSource::Sampled)
    }
}

/// Run a tracker and check it returned one full-length track per query.
pub fn run_tracker(adapter: &dyn PointTracker, video: &Video, queries: &[(f32, f32)]) -> Result<TrackSet> {
    let tracks = adapter.track(video, queries)?;
    if tracks.num_tracks() != queries.len() {
        return Err(DotError::Contract(format!(
            "tracker `{}` returned {} tracks for {} queries",
            adapter.name(),
            tracks.num_tracks(),
            queries.len()
        )));
    }
    if tracks.num_frames() != video.num_frames() {
        return Err(DotError::Contract(format!(
            "tracker `{}` returned tracks over {} frames for a {}-frame video",
            adapter.name(),
            tracks.num_frames(),
            video.num_frames()
        )));
    }
    Ok(tracks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::write_tracks;
    use crate::synthgen::{SceneSpec, ScenePreset};

    fn scene() -> Scene {
        Scene::generate(SceneSpec::random(21, ScenePreset::CvoLikeClean, 24, 24, Some(4))).unwrap()
    }

    #[test]
    fn noop_corruption_matches_ground_truth_adapter() {
        let s = scene();
        let q = vec![(1.0, 2.0), (10.0, 11.0), (23.0, 0.0)];
        let gt = run_tracker(&GroundTruthTracker { scene: &s }, s.video(), &q).unwrap();
        let c = CorruptedTracker {
            scene: &s,
            corruption: CorruptionSpec {
                sigma: 0.0,
                flip_prob: 0.0,
                seed: 4,
            },
        };
        assert_eq!(gt.tracks(), run_tracker(&c, s.video(), &q).unwrap().tracks());
    }

    #[test]
    fn external_round_trip_and_contract_check() {
        let s = scene();
        let dir = tempfile::tempdir().unwrap();
        let q = vec![(3.0, 4.0), (5.0, 6.0)];
        let gt = s.ground_truth_tracks(&q, 0, None).unwrap();
        let path = dir.path().join("tracks.json");
        write_tracks(&gt, &path).unwrap();
        let ext = ExternalTracker {
            tracks_path: path,
            queries_out: Some(dir.path().join("queries.json")),
        };
        let back = run_tracker(&ext, s.video(), &q).unwrap();
        assert_eq!(back.tracks(), gt.tracks());
        assert_eq!(crate::io::read_queries(dir.path().join("queries.json")).unwrap(), q);
        // three queries against a two-track file violates the contract
        let err = run_tracker(&ext, s.video(), &[(0.0, 0.0), (1.0, 1.0), (2.0, 2.0)]).unwrap_err();
        assert!(matches!(err, DotError::Contract(_)));
    }
}
