//! Supervised training of the refiner on synthetic clips.

mod data;
mod loss;

pub use data::{draw_example, DatasetConfig, Example, FixedBatches, SyntheticBatches, TrainingData, TrainingScene};
pub use loss::{compute_loss, LossReport, SparsePoint, Supervision, BCE_CLIP};

use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{DotError, Result};
use crate::nn::{lit, Adam, Graph, Scalar, Tensor};
use crate::refiner::{forward, make_inputs, RefineJob, Refiner, RefinerConfig};

/// Where training supervision comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SupervisionMode {
    /// Every pixel of the ground-truth flow and visibility.
    Dense,
    /// A random subset of ground-truth correspondences.
    SparseTracks,
}

/// Tracks fed to the interpolation stage during training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InputTracks {
    Gt,
    GtCorrupt { sigma: f32, flip_prob: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub num_input_tracks: usize,
    pub num_supervision_tracks: usize,
    pub supervision: SupervisionMode,
    pub input_tracks: InputTracks,
    /// Draw half of the input tracks near motion edges.
    pub motion_sampling: bool,
    /// Probability of anchoring a pair at frame 0.
    pub anchor_prob: f64,
    pub seed: u64,
    /// Checkpoint period in steps; 0 writes only the final weights.
    pub checkpoint_every: usize,
    pub refiner: RefinerConfig,
    pub dataset: DatasetConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            steps: 2000,
            batch_size: 4,
            num_input_tracks: 64,
            num_supervision_tracks: 256,
            supervision: SupervisionMode::Dense,
            input_tracks: InputTracks::GtCorrupt {
                sigma: 0.5,
                flip_prob: 0.02,
            },
            motion_sampling: true,
            anchor_prob: 0.5,
            seed: 0,
            checkpoint_every: 0,
            refiner: RefinerConfig::desk(),
            dataset: DatasetConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(DotError::Config(format!("bad learning rate {}", self.learning_rate)));
        }
        if self.steps == 0 || self.batch_size == 0 {
            return Err(DotError::Config("steps and batch size must be positive".into()));
        }
        if self.num_input_tracks == 0 {
            return Err(DotError::Config("need at least one input track".into()));
        }
        if !(0.0..=1.0).contains(&self.anchor_prob) {
            return Err(DotError::Config("anchor_prob must lie in [0, 1]".into()));
        }
        self.refiner.validate()
    }

    /// Parse JSON or TOML, chosen by file extension.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| DotError::io(path, e))?;
        let cfg: TrainConfig = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| DotError::format(path, e.to_string()))?
        } else {
            serde_json::from_str(&text)?
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Supplies the examples of each training step.
pub trait BatchSource {
    fn batch(&mut self, step: usize, patch: usize) -> Result<Vec<Example>>;
}

/// Mean loss over a batch and its gradient seeds for the network outputs.
pub fn loss_seeds<T: Scalar>(
    flow: &Tensor<T>,
    logits: &Tensor<T>,
    sups: &[&Supervision],
) -> Result<(LossReport, Tensor<T>, Tensor<T>)> {
    let [n, _, h, w] = flow.shape;
    assert_eq!(n, sups.len(), "one supervision per batch item");
    let hw = h * w;
    let mut dflow = Tensor::zeros(flow.shape);
    let mut dlogits = Tensor::zeros(logits.shape);
    let mut reports = Vec::with_capacity(n);
    let inv_n = 1.0 / n as f64;
    for (i, sup) in sups.iter().enumerate() {
        let fl: Vec<f64> = flow.data[2 * i * hw..2 * (i + 1) * hw]
            .iter()
            .map(|v| v.to_f64().unwrap_or(f64::NAN))
            .collect();
        let soft: Vec<f64> = logits.data[i * hw..(i + 1) * hw]
            .iter()
            .map(|v| 1.0 / (1.0 + (-v.to_f64().unwrap_or(f64::NAN)).exp()))
            .collect();
        let pred = loss::PlanarPrediction {
            height: h,
            width: w,
            flow: &fl,
            mask: &soft,
        };
        let (report, df, dm) = loss::loss_and_grad(&pred, sup)?;
        reports.push(report);
        for (k, v) in df.into_iter().enumerate() {
            dflow.data[2 * i * hw + k] = lit(v * inv_n);
        }
        for (k, v) in dm.into_iter().enumerate() {
            let s = soft[k];
            dlogits.data[i * hw + k] = lit(v * s * (1.0 - s) * inv_n);
        }
    }
    Ok((LossReport::mean(&reports), dflow, dlogits))
}

/// Training history.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub refiner: Refiner,
    pub curve: Vec<(usize, LossReport)>,
}

/// Loss curve as CSV with a header row.
pub fn curve_csv(curve: &[(usize, LossReport)]) -> String {
    let mut s = String::from("step,flow_l1,mask_bce,total\n");
    for (step, r) in curve {
        s.push_str(&format!("{step},{},{},{}\n", r.flow_l1, r.mask_bce, r.total));
    }
    s
}

/// Optional on-disk artifacts of a run.
#[derive(Debug, Clone)]
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn checkpoint(&self) -> PathBuf {
        self.root.join("refiner.safetensors")
    }

    pub fn step_checkpoint(&self, step: usize) -> PathBuf {
        self.root.join(format!("refiner_step{step:06}.safetensors"))
    }

    pub fn loss_curve(&self) -> PathBuf {
        self.root.join("loss.csv")
    }
}

/// One optimizer step on `examples`; returns the pre-update loss.
pub fn train_step(refiner: &mut Refiner, adam: &mut Adam, examples: &[Example], step: usize) -> Result<LossReport> {
    let cfg = refiner.config().clone();
    let jobs: Vec<RefineJob<'_>> = examples.iter().map(Example::job).collect();
    let inputs = make_inputs::<f32>(&cfg, &jobs)?;
    let (report, grads) = {
        let mut g = Graph::new(refiner.params());
        let out = forward(&mut g, &cfg, &inputs);
        let sups: Vec<&Supervision> = examples.iter().map(|e| &e.supervision).collect();
        let (report, dflow, dlogits) = loss_seeds(g.value(out.flow), g.value(out.mask_logits), &sups)?;
        if !report.total.is_finite() {
            return Err(DotError::Divergence {
                step,
                detail: format!("non-finite loss {report:?}"),
            });
        }
        (report, g.backward(&[(out.flow, dflow), (out.mask_logits, dlogits)]))
    };
    if !grads.all_finite() {
        return Err(DotError::Divergence {
            step,
            detail: "non-finite gradient".into(),
        });
    }
    adam.step(refiner.params_mut(), &grads);
    Ok(report)
}

/// Run `cfg.steps` Adam steps on batches from `source`.
///
/// `progress` sees every step's loss. With `run_dir`, the loss curve and
/// checkpoints are written there atomically.
pub fn train(
    cfg: &TrainConfig,
    init: Refiner,
    source: &mut dyn BatchSource,
    run_dir: Option<&RunDir>,
    mut progress: impl FnMut(usize, &LossReport),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if init.config() != &cfg.refiner {
        return Err(DotError::Config("initial weights do not match the configured refiner".into()));
    }
    let mut refiner = init;
    let mut adam = Adam::new(cfg.learning_rate);
    let mut curve = Vec::with_capacity(cfg.steps);
    if let Some(dir) = run_dir {
        std::fs::create_dir_all(&dir.root).map_err(|e| DotError::io(&dir.root, e))?;
    }
    for step in 1..=cfg.steps {
        let examples = source.batch(step, cfg.refiner.patch)?;
        let report = train_step(&mut refiner, &mut adam, &examples, step)?;
        progress(step, &report);
        curve.push((step, report));
        if let Some(dir) = run_dir {
            if cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 {
                refiner.save(dir.step_checkpoint(step))?;
                crate::io::write_atomic(&dir.loss_curve(), curve_csv(&curve).as_bytes())?;
            }
        }
    }
    if let Some(dir) = run_dir {
        refiner.save(dir.checkpoint())?;
        crate::io::write_atomic(&dir.loss_curve(), curve_csv(&curve).as_bytes())?;
        let cfg_path = dir.root.join("train_config.json");
        let mut f = std::fs::File::create(&cfg_path).map_err(|e| DotError::io(&cfg_path, e))?;
        f.write_all(serde_json::to_string_pretty(cfg)?.as_bytes())
            .map_err(|e| DotError::io(&cfg_path, e))?;
    }
    Ok(TrainOutcome { refiner, curve })
}
