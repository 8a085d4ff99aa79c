//! End-to-end dense tracking: seed queries, track them, interpolate the
//! tracks to a coarse estimate and refine it, for one source frame and any
//! set of targets.

mod experiment;

pub use experiment::{
    ablation, evaluate_method, n_sweep, naive_per_cell, HeldOut, Method, ABLATION_ROWS,
};

use serde::{Deserialize, Serialize};

use crate::error::{DotError, Result};
use crate::interp::{interpolate_bucketed, CoarseEstimate};
use crate::refiner::{RefineJob, Refiner};
use crate::seeding::{run_tracker, sample_queries, EdgeMap, PointTracker, SamplingBudget};
use crate::types::{FlowField, TrackSet, Video, VisibilityMask};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackOptions {
    pub num_tracks: usize,
    /// Spend half of the budget near motion edges.
    pub motion_sampling: bool,
    /// Initialize from tracks; otherwise from zero motion, all visible.
    pub use_tracks: bool,
    /// Run the refiner; otherwise return the upsampled interpolation.
    pub refine: bool,
    /// Patch size used when no refiner is involved.
    pub patch: usize,
    /// Pairs per refiner pass.
    pub batch: usize,
    pub seed: u64,
}

impl Default for TrackOptions {
    fn default() -> Self {
        TrackOptions {
            num_tracks: 64,
            motion_sampling: true,
            use_tracks: true,
            refine: true,
            patch: 4,
            batch: 8,
            seed: 0,
        }
    }
}

impl TrackOptions {
    pub fn validate(&self) -> Result<()> {
        if !self.use_tracks && !self.refine {
            return Err(DotError::Config("neither tracks nor refinement enabled: nothing to compute".into()));
        }
        if self.use_tracks && self.num_tracks == 0 {
            return Err(DotError::Config("need at least one track".into()));
        }
        if self.batch == 0 {
            return Err(DotError::Config("batch must be positive".into()));
        }
        Ok(())
    }
}

/// Dense motion from the source frame to one target.
#[derive(Debug, Clone, PartialEq)]
pub struct PairResult {
    pub target: usize,
    pub flow: FlowField,
    pub mask: VisibilityMask,
}

#[derive(Debug, Clone)]
pub struct DenseTracks {
    pub source: usize,
    pub tracks: Option<TrackSet>,
    pub pairs: Vec<PairResult>,
}

/// Sample queries at frame 0 (near `edges` when requested) and track them.
pub fn seed_tracks(video: &Video, edges: &EdgeMap, tracker: &dyn PointTracker, opts: &TrackOptions) -> Result<TrackSet> {
    let budget = if opts.motion_sampling {
        SamplingBudget::new(opts.num_tracks)
    } else {
        SamplingBudget::uniform(opts.num_tracks)
    };
    let queries = sample_queries(edges, &budget, opts.seed)?.points;
    run_tracker(tracker, video, &queries)
}

/// Coarse initialization for `(s, t)`, zero motion when `tracks` is absent
/// or none is visible at `s`.
pub fn coarse_init(
    tracks: Option<&TrackSet>,
    s: usize,
    t: usize,
    height: usize,
    width: usize,
    patch: usize,
) -> Result<CoarseEstimate> {
    let Some(tracks) = tracks else {
        return Ok(CoarseEstimate::zero(height, width, patch));
    };
    match interpolate_bucketed(tracks, s, t, height, width, patch, None) {
        Err(DotError::NoVisibleTracks(_)) => Ok(CoarseEstimate::zero(height, width, patch)),
        other => other,
    }
}

/// Densify `tracks` (if any) for every target and refine when enabled.
pub fn densify(
    video: &Video,
    tracks: Option<&TrackSet>,
    refiner: Option<&Refiner>,
    s: usize,
    targets: &[usize],
    opts: &TrackOptions,
) -> Result<Vec<PairResult>> {
    opts.validate()?;
    let (h, w) = (video.height(), video.width());
    video.frame(s)?;
    let refiner = if opts.refine {
        Some(refiner.ok_or_else(|| DotError::Config("refinement requested without a refiner".into()))?)
    } else {
        None
    };
    let patch = refiner.map_or(opts.patch, |r| r.config().patch);
    let tracks = if opts.use_tracks { tracks } else { None };
    if opts.use_tracks && tracks.is_none() {
        return Err(DotError::Config("track-based initialization requested without tracks".into()));
    }
    let inits = targets
        .iter()
        .map(|&t| {
            video.frame(t)?;
            coarse_init(tracks, s, t, h, w, patch)
        })
        .collect::<Result<Vec<_>>>()?;
    let Some(refiner) = refiner else {
        return Ok(targets
            .iter()
            .zip(&inits)
            .map(|(&t, init)| {
                let (flow, mask) = init.upsample_nearest(h, w);
                PairResult { target: t, flow, mask }
            })
            .collect());
    };
    let source = video.frame(s)?;
    let mut out = Vec::with_capacity(targets.len());
    for (ts, is) in targets.chunks(opts.batch).zip(inits.chunks(opts.batch)) {
        let jobs = ts
            .iter()
            .zip(is)
            .map(|(&t, init)| {
                Ok(RefineJob {
                    source,
                    target: video.frame(t)?,
                    init,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        for (&t, (flow, mask)) in ts.iter().zip(refiner.refine_batch(&jobs)?) {
            out.push(PairResult { target: t, flow, mask });
        }
    }
    Ok(out)
}

/// Full pipeline from frame `s` to each of `targets`.
pub fn track_video(
    video: &Video,
    edges: &EdgeMap,
    tracker: &dyn PointTracker,
    refiner: Option<&Refiner>,
    s: usize,
    targets: &[usize],
    opts: &TrackOptions,
) -> Result<DenseTracks> {
    opts.validate()?;
    let tracks = if opts.use_tracks {
        Some(seed_tracks(video, edges, tracker, opts)?)
    } else {
        None
    };
    let pairs = densify(video, tracks.as_ref(), refiner, s, targets, opts)?;
    Ok(DenseTracks { source: s, tracks, pairs })
}

/// Every frame but `s`.
pub fn all_targets(num_frames: usize, s: usize) -> Vec<usize> {
    (0..num_frames).filter(|&t| t != s).collect()
}
