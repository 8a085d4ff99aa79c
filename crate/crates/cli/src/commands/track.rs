use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use dot_core::io::{read_video_dir, write_flo, write_mask, write_tracks};
use dot_core::pipeline::{all_targets, track_video, TrackOptions};
use dot_core::refiner::Refiner;
use dot_core::seeding::{flow_edges, CorruptedTracker, EdgeMap, ExternalTracker, GroundTruthTracker, PointTracker};
use dot_core::synthgen::{CorruptionSpec, Scene, SceneSpec};
use dot_core::Video;
use serde::Serialize;

use crate::error::CliError;
use crate::fsutil::{prepare_out_dir, read_json, write_json};
use crate::Global;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrackerKind {
    /// Exact tracks from the scene's `spec.json`.
    Gt,
    /// Exact tracks with jitter and visibility flips.
    GtCorrupt,
    /// Tracks computed offline, read from `--tracks-file`.
    External,
}

#[derive(Debug, Args)]
pub struct TrackArgs {
    /// Scene directory (with `frames/`) or a directory of PNG frames.
    #[arg(long)]
    pub video: PathBuf,
    /// Refiner weights; required unless `--no-refine`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Number of point tracks.
    #[arg(long, default_value_t = 64)]
    pub tracks: usize,
    #[arg(long, value_enum, default_value_t = TrackerKind::GtCorrupt)]
    pub tracker: TrackerKind,
    #[arg(long)]
    pub tracks_file: Option<PathBuf>,
    /// Jitter of the corrupted tracker, pixels.
    #[arg(long, default_value_t = 0.5)]
    pub sigma: f32,
    #[arg(long, default_value_t = 0.02)]
    pub flip_prob: f64,
    /// Source frame.
    #[arg(long, default_value_t = 0)]
    pub source: usize,
    /// Target frame index, or `all` for every other frame.
    #[arg(long, default_value = "all")]
    pub target: String,
    /// Output the upsampled track interpolation without refinement.
    #[arg(long)]
    pub no_refine: bool,
    /// Refine from zero motion instead of track-based estimates.
    #[arg(long)]
    pub no_tracks: bool,
    /// Sample tracks uniformly instead of near motion edges.
    #[arg(long)]
    pub uniform_sampling: bool,
    /// Patch size when running without a refiner.
    #[arg(long, default_value_t = 4)]
    pub patch: usize,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Serialize)]
struct TrackRun<'a> {
    video: String,
    source: usize,
    targets: &'a [usize],
    tracker: TrackerKind,
    options: &'a TrackOptions,
    checkpoint: Option<String>,
}

/// Frames plus the scene oracle when the directory came from `generate`.
pub fn load_video(dir: &Path) -> Result<(Video, Option<Scene>), CliError> {
    let frames = dir.join("frames");
    let video = read_video_dir(if frames.is_dir() { &frames } else { dir }, 24.0)?;
    let spec_path = dir.join("spec.json");
    let scene = if spec_path.is_file() {
        let spec: SceneSpec = read_json(&spec_path)?;
        Some(Scene::generate(spec)?)
    } else {
        None
    };
    Ok((video, scene))
}

fn parse_targets(s: &str, num_frames: usize, source: usize) -> Result<Vec<usize>, CliError> {
    if s == "all" {
        return Ok(all_targets(num_frames, source));
    }
    let t: usize = s
        .parse()
        .map_err(|_| CliError::Usage(format!("--target must be a frame index or `all`, got `{s}`")))?;
    if t >= num_frames {
        return Err(CliError::Usage(format!("target {t} out of range for {num_frames} frames")));
    }
    Ok(vec![t])
}

pub fn run(global: &Global, args: TrackArgs) -> Result<(), CliError> {
    if args.no_refine && args.no_tracks {
        return Err(CliError::Usage("--no-refine and --no-tracks together leave nothing to compute".into()));
    }
    let refiner = if args.no_refine {
        None
    } else {
        let path = args
            .checkpoint
            .as_ref()
            .ok_or_else(|| CliError::Usage("refinement needs --checkpoint (or pass --no-refine)".into()))?;
        Some(Refiner::load(path, None)?)
    };
    let (video, scene) = load_video(&args.video)?;
    if args.source >= video.num_frames() {
        return Err(CliError::Usage(format!(
            "source {} out of range for {} frames",
            args.source,
            video.num_frames()
        )));
    }
    let targets = parse_targets(&args.target, video.num_frames(), args.source)?;
    let opts = TrackOptions {
        num_tracks: args.tracks,
        motion_sampling: !args.uniform_sampling,
        use_tracks: !args.no_tracks,
        refine: !args.no_refine,
        patch: refiner.as_ref().map_or(args.patch, |r| r.config().patch),
        seed: global.seed,
        ..TrackOptions::default()
    };
    opts.validate().map_err(|e| CliError::Usage(e.to_string()))?;

    let edges = match &scene {
        Some(s) => flow_edges(&video, &s.consecutive_flows())?,
        None => EdgeMap::from_edges(video.height(), video.width(), vec![false; video.height() * video.width()]),
    };
    let needs_scene = || {
        CliError::Usage(format!(
            "tracker needs the scene's spec.json in {}",
            args.video.display()
        ))
    };
    let tracker: Box<dyn PointTracker + '_> = match args.tracker {
        TrackerKind::Gt => Box::new(GroundTruthTracker {
            scene: scene.as_ref().ok_or_else(needs_scene)?,
        }),
        TrackerKind::GtCorrupt => Box::new(CorruptedTracker {
            scene: scene.as_ref().ok_or_else(needs_scene)?,
            corruption: CorruptionSpec {
                sigma: args.sigma,
                flip_prob: args.flip_prob,
                seed: global.seed ^ 0xC0_FFEE,
            },
        }),
        TrackerKind::External => Box::new(ExternalTracker {
            tracks_path: args
                .tracks_file
                .clone()
                .ok_or_else(|| CliError::Usage("--tracker external needs --tracks-file".into()))?,
            queries_out: Some(args.out.join("queries.json")),
        }),
    };

    prepare_out_dir(&args.out, args.force)?;
    let out = track_video(&video, &edges, tracker.as_ref(), refiner.as_ref(), args.source, &targets, &opts)?;
    for p in &out.pairs {
        write_flo(&p.flow, args.out.join(format!("flow_{}_{}.flo", args.source, p.target)))?;
        write_mask(&p.mask, args.out.join(format!("mask_{}_{}.png", args.source, p.target)))?;
    }
    if let Some(tracks) = &out.tracks {
        write_tracks(tracks, args.out.join("tracks.json"))?;
    }
    write_json(
        &args.out.join("track_run.json"),
        &TrackRun {
            video: args.video.display().to_string(),
            source: args.source,
            targets: &targets,
            tracker: args.tracker,
            options: &opts,
            checkpoint: args.checkpoint.as_ref().map(|p| p.display().to_string()),
        },
    )?;
    log::info!("{} flows written to {}", out.pairs.len(), args.out.display());
    Ok(())
}
