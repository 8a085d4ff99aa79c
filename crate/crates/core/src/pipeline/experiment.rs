use serde::{Deserialize, Serialize};

use super::{all_targets, coarse_init, track_video, TrackOptions};
use crate::error::{DotError, Result};
use crate::eval::{flow_metrics, parallel_map, EvalRecord, EvalReport};
use crate::interp::coarse_dims;
use crate::refiner::Refiner;
use crate::seeding::{CorruptedTracker, GroundTruthTracker, PointTracker};
use crate::synthgen::CorruptionSpec;
use crate::training::TrainingScene;
use crate::types::{FlowField, MetricReport, TrackSet, Video, VisibilityMask};

/// Row names of the ablation table, in table order.
pub const ABLATION_ROWS: [&str; 5] = ["full", "no-motion-sampling", "patch-8", "no-tracks", "no-refine"];

/// Evaluation protocol on held-out synthetic scenes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeldOut {
    pub num_tracks: usize,
    /// Jitter of the simulated tracker, pixels.
    pub sigma: f32,
    /// Visibility flip probability of the simulated tracker.
    pub flip_prob: f64,
    /// Evaluate `0 -> t` for every `t`; otherwise only first-to-last.
    pub all_targets: bool,
    pub seed: u64,
    pub workers: usize,
}

impl Default for HeldOut {
    fn default() -> Self {
        HeldOut {
            num_tracks: 64,
            sigma: 0.5,
            flip_prob: 0.02,
            all_targets: true,
            seed: 0,
            workers: 1,
        }
    }
}

/// A named pipeline variant.
#[derive(Debug, Clone)]
pub struct Method<'a> {
    pub name: String,
    pub refiner: Option<&'a Refiner>,
    pub opts: TrackOptions,
}

fn mean_report(rs: &[MetricReport]) -> MetricReport {
    let records: Vec<EvalRecord> = rs
        .iter()
        .map(|m| EvalRecord {
            method: String::new(),
            video: String::new(),
            metrics: m.clone(),
        })
        .collect();
    crate::eval::aggregate(&records)
        .pop()
        .map(|(_, r)| r)
        .unwrap_or_default()
}

fn evaluate_scene(method: &Method<'_>, ts: &TrainingScene, protocol: &HeldOut) -> Result<EvalRecord> {
    let scene = &ts.scene;
    let video = scene.video();
    let scene_seed = scene.spec().seed;
    let targets = if protocol.all_targets {
        all_targets(video.num_frames(), 0)
    } else {
        vec![video.num_frames() - 1]
    };
    // Query and tracker noise depend only on the scene, so every method sees
    // the same input tracks.
    let opts = TrackOptions {
        seed: protocol.seed ^ scene_seed.wrapping_mul(0x9E37_79B9_7F4A_7C15),
        ..method.opts.clone()
    };
    let gt_tracker = GroundTruthTracker { scene };
    let noisy = CorruptedTracker {
        scene,
        corruption: CorruptionSpec {
            sigma: protocol.sigma,
            flip_prob: protocol.flip_prob,
            seed: opts.seed ^ 0xC0_FFEE,
        },
    };
    let tracker: &dyn PointTracker = if protocol.sigma == 0.0 && protocol.flip_prob == 0.0 {
        &gt_tracker
    } else {
        &noisy
    };
    let out = track_video(video, &ts.edges, tracker, method.refiner, 0, &targets, &opts)?;
    let per_pair = out
        .pairs
        .iter()
        .map(|p| {
            let (gf, gv) = scene.ground_truth_pair(0, p.target)?;
            flow_metrics(&p.flow, &p.mask, &gf, &gv)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalRecord {
        method: method.name.clone(),
        video: format!("scene_{scene_seed}"),
        metrics: mean_report(&per_pair),
    })
}

/// Per-video metrics of one method, averaged over the evaluated pairs.
pub fn evaluate_method(method: &Method<'_>, scenes: &[TrainingScene], protocol: &HeldOut) -> Result<Vec<EvalRecord>> {
    parallel_map(scenes, protocol.workers, |ts| evaluate_scene(method, ts, protocol))
        .into_iter()
        .collect()
}

fn run_all(methods: &[Method<'_>], scenes: &[TrainingScene], protocol: &HeldOut) -> Result<EvalReport> {
    let mut records = Vec::new();
    for m in methods {
        records.extend(evaluate_method(m, scenes, protocol)?);
    }
    Ok(EvalReport::new(records))
}

/// The five ablation rows with shared query seeds.
///
/// `full` and `patch8` are trained refiners; the zero-initialization row
/// reuses `full`.
pub fn ablation(full: &Refiner, patch8: &Refiner, scenes: &[TrainingScene], protocol: &HeldOut) -> Result<EvalReport> {
    if patch8.config().patch != 8 {
        return Err(DotError::Config(format!(
            "patch-8 row needs a patch 8 refiner, got {}",
            patch8.config().patch
        )));
    }
    let base = TrackOptions {
        num_tracks: protocol.num_tracks,
        patch: full.config().patch,
        ..TrackOptions::default()
    };
    let methods = [
        Method {
            name: ABLATION_ROWS[0].into(),
            refiner: Some(full),
            opts: base.clone(),
        },
        Method {
            name: ABLATION_ROWS[1].into(),
            refiner: Some(full),
            opts: TrackOptions {
                motion_sampling: false,
                ..base.clone()
            },
        },
        Method {
            name: ABLATION_ROWS[2].into(),
            refiner: Some(patch8),
            opts: base.clone(),
        },
        Method {
            name: ABLATION_ROWS[3].into(),
            refiner: Some(full),
            opts: TrackOptions {
                use_tracks: false,
                ..base.clone()
            },
        },
        Method {
            name: ABLATION_ROWS[4].into(),
            refiner: None,
            opts: TrackOptions {
                refine: false,
                ..base
            },
        },
    ];
    run_all(&methods, scenes, protocol)
}

/// Full pipeline at each track budget, rows named `n<count>`.
pub fn n_sweep(refiner: &Refiner, scenes: &[TrainingScene], budgets: &[usize], protocol: &HeldOut) -> Result<EvalReport> {
    let methods: Vec<Method<'_>> = budgets
        .iter()
        .map(|&n| Method {
            name: format!("n{n}"),
            refiner: Some(refiner),
            opts: TrackOptions {
                num_tracks: n,
                patch: refiner.config().patch,
                ..TrackOptions::default()
            },
        })
        .collect();
    run_all(&methods, scenes, protocol)
}

/// Deliberately naive dense baseline: one full refiner pass per coarse cell,
/// each keeping only its own `P x P` block of the output.
pub fn naive_per_cell(
    refiner: &Refiner,
    video: &Video,
    tracks: &TrackSet,
    s: usize,
    t: usize,
) -> Result<(FlowField, VisibilityMask)> {
    let (h, w) = (video.height(), video.width());
    let p = refiner.config().patch;
    let init = coarse_init(Some(tracks), s, t, h, w, p)?;
    let (source, target) = (video.frame(s)?, video.frame(t)?);
    let (hc, wc) = coarse_dims(h, w, p);
    let mut flow = FlowField::zeros(h, w, crate::types::Resolution::Fine);
    let mut mask = VisibilityMask {
        height: h,
        width: w,
        data: vec![0.0; h * w],
        binary: false,
    };
    for i in 0..hc {
        for j in 0..wc {
            let (f, m) = refiner.refine(source, target, &init)?;
            for y in i * p..((i + 1) * p).min(h) {
                for x in j * p..((j + 1) * p).min(w) {
                    flow.set(x, y, f.get(x, y));
                    mask.data[y * w + x] = m.get(x, y);
                }
            }
        }
    }
    Ok((flow, mask))
}
