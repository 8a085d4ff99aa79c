use rand::Rng;
use serde::{Deserialize, Serialize};

/// One sinusoidal grating in surface coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grating {
    /// Cycles per pixel along x and y.
    pub frequency: [f64; 2],
    pub phase: f64,
    pub amplitude: [f64; 3],
}

/// Procedural surface texture: base color, gratings and lattice value noise.
///
/// The color is a function of surface (object-local) coordinates only, so it
/// moves rigidly with its object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Texture {
    pub base: [f64; 3],
    pub gratings: Vec<Grating>,
    pub noise_seed: u64,
    /// Lattice spacing in pixels.
    pub noise_cell: f64,
    pub noise_amplitude: f64,
}

impl Texture {
    pub fn flat(base: [f64; 3]) -> Self {
        Texture {
            base,
            gratings: Vec::new(),
            noise_seed: 0,
            noise_cell: 1.0,
            noise_amplitude: 0.0,
        }
    }

    pub fn random<R: Rng>(rng: &mut R, extent: f64) -> Self {
        let base = [
            rng.random_range(0.2..0.8),
            rng.random_range(0.2..0.8),
            rng.random_range(0.2..0.8),
        ];
        let n = rng.random_range(1..=3usize);
        let gratings = (0..n)
            .map(|_| {
                let period = rng.random_range(4.0..16.0) * extent / 64.0;
                let theta: f64 = rng.random_range(0.0..std::f64::consts::PI);
                Grating {
                    frequency: [theta.cos() / period, theta.sin() / period],
                    phase: rng.random_range(0.0..std::f64::consts::TAU),
                    amplitude: [
                        rng.random_range(-0.15..0.15),
                        rng.random_range(-0.15..0.15),
                        rng.random_range(-0.15..0.15),
                    ],
                }
            })
            .collect();
        Texture {
            base,
            gratings,
            noise_seed: rng.random(),
            noise_cell: rng.random_range(2.0..5.0) * extent / 64.0,
            noise_amplitude: rng.random_range(0.1..0.25),
        }
    }

    pub fn color(&self, u: [f64; 2]) -> [f64; 3] {
        let mut c = self.base;
        for g in &self.gratings {
            let s = (std::f64::consts::TAU * (g.frequency[0] * u[0] + g.frequency[1] * u[1]) + g.phase).sin();
            for (ck, a) in c.iter_mut().zip(g.amplitude) {
                *ck += a * s;
            }
        }
        if self.noise_amplitude > 0.0 {
            let n = value_noise(self.noise_seed, u[0] / self.noise_cell, u[1] / self.noise_cell);
            for (k, ck) in c.iter_mut().enumerate() {
                // decorrelate channels a little
                let w = [1.0, 0.8, 0.6][k];
                *ck += self.noise_amplitude * w * n;
            }
        }
        c.map(|v| v.clamp(0.0, 1.0))
    }
}

fn hash2(seed: u64, ix: i64, iy: i64) -> f64 {
    let mut z = seed
        ^ (ix as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (iy as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
}

/// Smoothly interpolated lattice noise in `[-1, 1]`.
fn value_noise(seed: u64, x: f64, y: f64) -> f64 {
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    let (sx, sy) = (fx * fx * (3.0 - 2.0 * fx), fy * fy * (3.0 - 2.0 * fy));
    let (ix, iy) = (x0 as i64, y0 as i64);
    let v00 = hash2(seed, ix, iy);
    let v10 = hash2(seed, ix + 1, iy);
    let v01 = hash2(seed, ix, iy + 1);
    let v11 = hash2(seed, ix + 1, iy + 1);
    (1.0 - sy) * ((1.0 - sx) * v00 + sx * v10) + sy * ((1.0 - sx) * v01 + sx * v11)
}
