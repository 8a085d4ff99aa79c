//! Inputs shared by the benchmarks.

use dot_core::synthgen::{Scene, ScenePreset, SceneSpec};
use dot_core::{TrackPoint, TrackSet, TrackSource};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `n` two-frame tracks scattered over an `h x w` frame, about 10% occluded at the target.
pub fn random_tracks(n: usize, h: usize, w: usize, seed: u64) -> TrackSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tracks = (0..n)
        .map(|_| {
            let x = rng.random_range(0.0..w as f32);
            let y = rng.random_range(0.0..h as f32);
            let dx = rng.random_range(-4.0..4.0f32);
            let dy = rng.random_range(-4.0..4.0f32);
            vec![TrackPoint::new(x, y, true), TrackPoint::new(x + dx, y + dy, rng.random_bool(0.9))]
        })
        .collect();
    TrackSet::new(2, tracks, TrackSource::Sampled).expect("well-formed tracks")
}

pub fn scene(seed: u64, h: usize, w: usize) -> Scene {
    Scene::generate(SceneSpec::random(seed, ScenePreset::CvoLikeClean, h, w, Some(4))).expect("scene")
}
