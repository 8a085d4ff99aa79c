use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{DotError, Result};
use crate::types::Video;

/// Where a timing was taken.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvFingerprint {
    pub os: String,
    pub arch: String,
    pub threads: usize,
    pub version: String,
    pub debug_build: bool,
}

impl EnvFingerprint {
    pub fn current() -> Self {
        EnvFingerprint {
            os: std::env::consts::OS.to_string(),
            arch: std::env::consts::ARCH.to_string(),
            threads: std::thread::available_parallelism().map_or(1, |n| n.get()),
            version: env!("CARGO_PKG_VERSION").to_string(),
            debug_build: cfg!(debug_assertions),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    /// Mean seconds per video over repetitions.
    pub mean: f64,
    /// Population standard deviation over repetitions.
    pub std: f64,
    /// Seconds per video of each repetition.
    pub per_repetition: Vec<f64>,
    pub env: EnvFingerprint,
}

/// Time `method` on the first-to-last frame pair of every video.
///
/// One untimed warmup call on the first video precedes `repetitions` timed
/// passes over the whole set. Runs on the calling thread only.
pub fn time_method<R>(
    videos: &[&Video],
    repetitions: usize,
    mut method: impl FnMut(&Video, usize, usize) -> Result<R>,
) -> Result<TimingReport> {
    if videos.is_empty() || repetitions == 0 {
        return Err(DotError::Invalid("timing needs videos and at least one repetition".into()));
    }
    let last = |v: &Video| v.num_frames().saturating_sub(1);
    std::hint::black_box(method(videos[0], 0, last(videos[0]))?);
    let mut per_repetition = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        let start = Instant::now();
        for v in videos {
            std::hint::black_box(method(v, 0, last(v))?);
        }
        per_repetition.push(start.elapsed().as_secs_f64() / videos.len() as f64);
    }
    let n = per_repetition.len() as f64;
    let mean = per_repetition.iter().sum::<f64>() / n;
    let std = (per_repetition.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / n).sqrt();
    Ok(TimingReport {
        mean,
        std,
        per_repetition,
        env: EnvFingerprint::current(),
    })
}
