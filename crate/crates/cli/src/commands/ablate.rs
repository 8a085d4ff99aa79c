use std::path::PathBuf;

use clap::Args;
use dot_core::eval::summary_csv;
use dot_core::pipeline::{ablation, n_sweep, HeldOut};
use dot_core::refiner::Refiner;
use dot_core::training::{DatasetConfig, TrainingData};
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::fsutil::{prepare_out_dir, read_config, write_json, write_text};
use crate::Global;

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// Trained refiner with patch size 4.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Trained refiner with patch size 8.
    #[arg(long)]
    pub checkpoint_p8: PathBuf,
    /// Held-out scene count.
    #[arg(long)]
    pub num_videos: Option<usize>,
    /// First scene seed of the held-out set.
    #[arg(long)]
    pub held_out_seed: Option<u64>,
    /// Track budgets of the sweep, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub n_sweep: Option<Vec<usize>>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
}

/// Contents of `--config` for this command.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct AblateConfig {
    pub protocol: HeldOut,
    pub held_out: DatasetConfig,
    pub budgets: Vec<usize>,
}

impl Default for AblateConfig {
    fn default() -> Self {
        AblateConfig {
            protocol: HeldOut::default(),
            held_out: DatasetConfig {
                num_videos: 50,
                seed: 1_000_000,
                ..DatasetConfig::default()
            },
            budgets: vec![16, 64, 256],
        }
    }
}

pub fn run(global: &Global, args: AblateArgs) -> Result<(), CliError> {
    let mut cfg: AblateConfig = match &global.config {
        Some(p) => read_config(p)?,
        None => AblateConfig::default(),
    };
    cfg.protocol.seed = global.seed;
    cfg.protocol.workers = global.workers;
    if let Some(n) = args.num_videos {
        cfg.held_out.num_videos = n;
    }
    if let Some(s) = args.held_out_seed {
        cfg.held_out.seed = s;
    }
    if let Some(b) = args.n_sweep.clone() {
        cfg.budgets = b;
    }
    if cfg.held_out.num_videos == 0 || cfg.budgets.contains(&0) {
        return Err(CliError::Usage("held-out set and track budgets must be non-empty".into()));
    }
    let full = Refiner::load(&args.checkpoint, None)?;
    let p8 = Refiner::load(&args.checkpoint_p8, None)?;
    if full.config().patch != 4 || p8.config().patch != 8 {
        return Err(CliError::Usage(format!(
            "expected patch sizes 4 and 8, got {} and {}",
            full.config().patch,
            p8.config().patch
        )));
    }
    prepare_out_dir(&args.out, args.force)?;
    write_json(&args.out.join("ablate_config.json"), &cfg)?;

    log::info!("generating {} held-out scenes", cfg.held_out.num_videos);
    let held = TrainingData::generate(&cfg.held_out)?;
    let table = ablation(&full, &p8, &held.scenes, &cfg.protocol)?;
    write_text(&args.out.join("ablation.csv"), &summary_csv(&table.aggregate))?;
    write_text(&args.out.join("ablation.json"), &table.to_json())?;
    for (name, m) in &table.aggregate {
        log::info!("{name:>20}: epe {:.4} iou {:.4}", m.epe_all.unwrap_or(f64::NAN), m.iou_occ.unwrap_or(f64::NAN));
    }
    let sweep = n_sweep(&full, &held.scenes, &cfg.budgets, &cfg.protocol)?;
    write_text(&args.out.join("nsweep.csv"), &summary_csv(&sweep.aggregate))?;
    write_text(&args.out.join("nsweep.json"), &sweep.to_json())?;
    Ok(())
}
