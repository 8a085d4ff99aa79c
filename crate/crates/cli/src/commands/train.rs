use std::path::PathBuf;

use clap::Args;
use dot_core::refiner::Refiner;
use dot_core::training::{train, RunDir, SyntheticBatches, TrainConfig, TrainingData};

use crate::error::CliError;
use crate::fsutil::prepare_out_dir;
use crate::Global;

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Run directory for checkpoints, loss curve and the resolved config.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Patch size of the refiner (4 or 8).
    #[arg(long)]
    pub patch: Option<usize>,
    /// Number of generated training clips.
    #[arg(long)]
    pub num_videos: Option<usize>,
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    /// Start from these weights instead of a fresh initialization.
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Log the running loss every this many steps.
    #[arg(long, default_value_t = 100)]
    pub log_every: usize,
    #[arg(long)]
    pub force: bool,
}

/// Config file (or defaults) with command-line overrides; `--seed` drives
/// initialization and batch sampling.
pub fn resolve_config(global: &Global, args: &TrainArgs) -> Result<TrainConfig, CliError> {
    let mut cfg = match &global.config {
        Some(path) => TrainConfig::from_file(path)?,
        None => TrainConfig::default(),
    };
    cfg.seed = global.seed;
    if let Some(s) = args.steps {
        cfg.steps = s;
    }
    if let Some(p) = args.patch {
        cfg.refiner = cfg.refiner.with_patch(p);
    }
    if let Some(n) = args.num_videos {
        cfg.dataset.num_videos = n;
    }
    if let Some(k) = args.checkpoint_every {
        cfg.checkpoint_every = k;
    }
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

pub fn run(global: &Global, args: TrainArgs) -> Result<(), CliError> {
    let cfg = resolve_config(global, &args)?;
    prepare_out_dir(&args.out, args.force)?;
    log::info!(
        "generating {} clips of {}x{}x{}",
        cfg.dataset.num_videos,
        cfg.dataset.width,
        cfg.dataset.height,
        cfg.dataset.num_frames
    );
    let data = TrainingData::generate(&cfg.dataset)?;
    let init = match &args.init {
        Some(path) => Refiner::load(path, Some(&cfg.refiner))?,
        None => Refiner::new(cfg.refiner.clone(), cfg.seed)?,
    };
    let mut source = SyntheticBatches::new(&data, &cfg);
    let run_dir = RunDir { root: args.out.clone() };
    let every = args.log_every.max(1);
    let mut window = (0.0, 0.0, 0usize);
    let outcome = train(&cfg, init, &mut source, Some(&run_dir), |step, r| {
        window = (window.0 + r.flow_l1, window.1 + r.mask_bce, window.2 + 1);
        if step % every == 0 || step == cfg.steps {
            let n = window.2 as f64;
            log::info!("step {step}: flow_l1 {:.4} mask_bce {:.4}", window.0 / n, window.1 / n);
            window = (0.0, 0.0, 0);
        }
    })?;
    log::info!(
        "saved {} after {} steps",
        run_dir.checkpoint().display(),
        outcome.curve.len()
    );
    Ok(())
}
