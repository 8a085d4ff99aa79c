use std::path::PathBuf;

use clap::Args;
use dot_core::eval::parallel_map;
use dot_core::synthgen::{write_scene_dir, DatasetLayout, Scene, ScenePreset, SceneSpec};

use crate::error::CliError;
use crate::fsutil::prepare_out_dir;
use crate::Global;

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// cvo-like-clean, cvo-like-final (motion blur) or cvo-like-extended (longer clips).
    #[arg(long, default_value = "cvo-like-clean")]
    pub preset: String,
    #[arg(long, default_value_t = 10)]
    pub num_scenes: usize,
    #[arg(long, default_value_t = 64)]
    pub height: usize,
    #[arg(long, default_value_t = 64)]
    pub width: usize,
    /// Clip length; the preset's default when omitted.
    #[arg(long)]
    pub frames: Option<usize>,
    /// Ground-truth tracks written per scene.
    #[arg(long, default_value_t = 256)]
    pub tracks: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
}

pub fn run(global: &Global, args: GenerateArgs) -> Result<(), CliError> {
    let preset = ScenePreset::parse(&args.preset).ok_or_else(|| {
        CliError::Usage(format!(
            "unknown preset `{}` (expected cvo-like-clean, cvo-like-final or cvo-like-extended)",
            args.preset
        ))
    })?;
    if args.num_scenes == 0 || args.height == 0 || args.width == 0 {
        return Err(CliError::Usage("scene count and frame size must be positive".into()));
    }
    prepare_out_dir(&args.out, args.force)?;
    let seeds: Vec<u64> = (0..args.num_scenes as u64).map(|i| global.seed.wrapping_add(i)).collect();
    let results = parallel_map(&seeds, global.workers, |&seed| {
        let spec = SceneSpec::random(seed, preset, args.height, args.width, args.frames);
        let scene = Scene::generate(spec)?;
        let layout = DatasetLayout::anchored(scene.num_frames(), args.tracks);
        write_scene_dir(&scene, &args.out, &layout)
    });
    let mut missing = Vec::new();
    for (seed, r) in seeds.iter().zip(results) {
        match r {
            Ok(dir) => log::debug!("wrote {}", dir.display()),
            Err(e) => {
                log::error!("scene {seed}: {e}");
                missing.push(format!("scene_{seed}"));
            }
        }
    }
    log::info!(
        "{} {} scenes in {}",
        seeds.len() - missing.len(),
        preset.name(),
        args.out.display()
    );
    if missing.is_empty() {
        Ok(())
    } else {
        Err(CliError::Partial {
            done: seeds.len() - missing.len(),
            total: seeds.len(),
            missing,
        })
    }
}
