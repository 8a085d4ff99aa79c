use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{BatchSource, InputTracks, SparsePoint, Supervision, SupervisionMode, TrainConfig};
use crate::error::{DotError, Result};
use crate::interp::{interpolate_bucketed, CoarseEstimate};
use crate::refiner::RefineJob;
use crate::seeding::{flow_edges, sample_queries, EdgeMap, SamplingBudget};
use crate::synthgen::{CorruptionSpec, Scene, ScenePreset, SceneSpec};
use crate::types::Frame;

/// Size and seed of a generated clip collection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub num_videos: usize,
    pub height: usize,
    pub width: usize,
    pub num_frames: usize,
    pub preset: ScenePreset,
    /// Video `i` uses scene seed `seed + i`.
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            num_videos: 500,
            height: 64,
            width: 64,
            num_frames: 8,
            preset: ScenePreset::CvoLikeClean,
            seed: 0,
        }
    }
}

/// A scene with its precomputed motion edges.
#[derive(Debug, Clone)]
pub struct TrainingScene {
    pub scene: Scene,
    pub edges: EdgeMap,
}

impl TrainingScene {
    pub fn new(scene: Scene) -> Result<Self> {
        let edges = flow_edges(scene.video(), &scene.consecutive_flows())?;
        Ok(TrainingScene { scene, edges })
    }
}

#[derive(Debug, Clone)]
pub struct TrainingData {
    pub scenes: Vec<TrainingScene>,
}

impl TrainingData {
    pub fn generate(cfg: &DatasetConfig) -> Result<Self> {
        let scenes = (0..cfg.num_videos)
            .map(|i| {
                let spec = SceneSpec::random(
                    cfg.seed.wrapping_add(i as u64),
                    cfg.preset,
                    cfg.height,
                    cfg.width,
                    Some(cfg.num_frames),
                );
                TrainingScene::new(Scene::generate(spec)?)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TrainingData { scenes })
    }

    pub fn len(&self) -> usize {
        self.scenes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenes.is_empty()
    }
}

/// One supervised pair with its track-based initialization.
#[derive(Debug, Clone)]
pub struct Example {
    pub source: Frame,
    pub target: Frame,
    pub init: CoarseEstimate,
    pub supervision: Supervision,
}

impl Example {
    pub fn job(&self) -> RefineJob<'_> {
        RefineJob {
            source: &self.source,
            target: &self.target,
            init: &self.init,
        }
    }
}

/// Build the training example for pair `(s, t)` of a scene.
///
/// Input tracks are seeded at frame `s` (half near motion edges when
/// `cfg.motion_sampling`), read from the scene oracle, optionally corrupted,
/// and interpolated to the coarse grid. If no track survives at `s` the
/// initialization falls back to zero motion, all visible.
pub fn draw_example(ts: &TrainingScene, s: usize, t: usize, cfg: &TrainConfig, patch: usize, seed: u64) -> Result<Example> {
    let video = ts.scene.video();
    let (h, w) = (video.height(), video.width());
    let budget = if cfg.motion_sampling {
        SamplingBudget::new(cfg.num_input_tracks)
    } else {
        SamplingBudget::uniform(cfg.num_input_tracks)
    };
    let queries = sample_queries(&ts.edges, &budget, seed)?.points;
    let corruption = match cfg.input_tracks {
        InputTracks::Gt => None,
        InputTracks::GtCorrupt { sigma, flip_prob } => Some(CorruptionSpec {
            sigma,
            flip_prob,
            seed: seed ^ 0xC0_FFEE,
        }),
    };
    let tracks = ts.scene.ground_truth_tracks(&queries, s, corruption.as_ref())?;
    let init = match interpolate_bucketed(&tracks, s, t, h, w, patch, None) {
        Ok(e) => e,
        Err(DotError::NoVisibleTracks(_)) => CoarseEstimate::zero(h, w, patch),
        Err(e) => return Err(e),
    };
    let supervision = match cfg.supervision {
        SupervisionMode::Dense => {
            let (flow, visibility) = ts.scene.ground_truth_pair(s, t)?;
            Supervision::Dense { flow, visibility }
        }
        SupervisionMode::SparseTracks => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_5EED);
            let points = (0..cfg.num_supervision_tracks.max(1))
                .map(|_| {
                    let x = rng.random_range(0..w) as f32;
                    let y = rng.random_range(0..h) as f32;
                    let (q, visible) = ts.scene.transport_point([x as f64, y as f64], s, t);
                    SparsePoint {
                        x,
                        y,
                        dx: (q[0] - x as f64) as f32,
                        dy: (q[1] - y as f64) as f32,
                        visible,
                    }
                })
                .collect();
            Supervision::Sparse(points)
        }
    };
    Ok(Example {
        source: video.frame(s)?.clone(),
        target: video.frame(t)?.clone(),
        init,
        supervision,
    })
}

/// Random pairs from a clip collection.
pub struct SyntheticBatches<'a> {
    data: &'a TrainingData,
    cfg: TrainConfig,
    rng: ChaCha8Rng,
}

impl<'a> SyntheticBatches<'a> {
    pub fn new(data: &'a TrainingData, cfg: &TrainConfig) -> Self {
        SyntheticBatches {
            data,
            cfg: cfg.clone(),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xDA7A),
        }
    }

    /// Frame pair: anchored at 0 with probability `anchor_prob`, otherwise
    /// uniform over ordered pairs of distinct frames.
    fn pair(&mut self, num_frames: usize) -> (usize, usize) {
        if self.rng.random_bool(self.cfg.anchor_prob) {
            (0, self.rng.random_range(1..num_frames))
        } else {
            let s = self.rng.random_range(0..num_frames);
            let t = self.rng.random_range(0..num_frames - 1);
            (s, if t >= s { t + 1 } else { t })
        }
    }
}

impl BatchSource for SyntheticBatches<'_> {
    fn batch(&mut self, _step: usize, patch: usize) -> Result<Vec<Example>> {
        if self.data.is_empty() {
            return Err(DotError::Invalid("empty training set".into()));
        }
        (0..self.cfg.batch_size)
            .map(|_| {
                let ts = &self.data.scenes[self.rng.random_range(0..self.data.len())];
                let (s, t) = self.pair(ts.scene.num_frames());
                let seed = self.rng.random();
                draw_example(ts, s, t, &self.cfg, patch, seed)
            })
            .collect()
    }
}

/// The same batch at every step.
pub struct FixedBatches(pub Vec<Example>);

impl BatchSource for FixedBatches {
    fn batch(&mut self, _step: usize, _patch: usize) -> Result<Vec<Example>> {
        Ok(self.0.clone())
    }
}
