//! Procedural videos of textured rigid objects with analytic ground truth.
//!
//! Every object follows an affine trajectory (translation with constant
//! acceleration, rotation and exponential scaling about its center), so the
//! position of any surface point at any time is known in closed form. Depth
//! order is fixed; each pixel shows the topmost object covering it, or the
//! translating background.

mod dataset;
mod oracle;
mod render;

pub use dataset::{write_scene_dir, DatasetLayout};
pub use oracle::{CorruptionSpec, Scene};
pub use render::Texture;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DotError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Rectangle { half_width: f64, half_height: f64 },
    Ellipse { radius_x: f64, radius_y: f64 },
}

impl Shape {
    /// Containment test in object-local coordinates.
    #[inline]
    pub fn contains(&self, u: [f64; 2]) -> bool {
        match *self {
            Shape::Rectangle {
                half_width,
                half_height,
            } => u[0].abs() <= half_width && u[1].abs() <= half_height,
            Shape::Ellipse { radius_x, radius_y } => {
                let a = u[0] / radius_x;
                let b = u[1] / radius_y;
                a * a + b * b <= 1.0
            }
        }
    }

    fn area(&self) -> f64 {
        match *self {
            Shape::Rectangle {
                half_width,
                half_height,
            } => 4.0 * half_width * half_height,
            Shape::Ellipse { radius_x, radius_y } => std::f64::consts::PI * radius_x * radius_y,
        }
    }
}

/// Affine motion as a function of (continuous) frame time `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub center: [f64; 2],
    pub velocity: [f64; 2],
    pub acceleration: [f64; 2],
    pub angle: f64,
    pub angular_velocity: f64,
    pub scale: f64,
    /// Log-scale growth per frame.
    pub scale_rate: f64,
}

impl Trajectory {
    pub fn translation(center: [f64; 2], velocity: [f64; 2]) -> Self {
        Trajectory {
            center,
            velocity,
            acceleration: [0.0, 0.0],
            angle: 0.0,
            angular_velocity: 0.0,
            scale: 1.0,
            scale_rate: 0.0,
        }
    }

    pub fn center_at(&self, t: f64) -> [f64; 2] {
        [
            self.center[0] + self.velocity[0] * t + 0.5 * self.acceleration[0] * t * t,
            self.center[1] + self.velocity[1] * t + 0.5 * self.acceleration[1] * t * t,
        ]
    }

    pub fn angle_at(&self, t: f64) -> f64 {
        self.angle + self.angular_velocity * t
    }

    pub fn scale_at(&self, t: f64) -> f64 {
        self.scale * (self.scale_rate * t).exp()
    }

    /// Image position to object-local coordinates at time `t`.
    #[inline]
    pub fn to_local(&self, p: [f64; 2], t: f64) -> [f64; 2] {
        let c = self.center_at(t);
        let (sin, cos) = self.angle_at(t).sin_cos();
        let s = self.scale_at(t);
        let (dx, dy) = (p[0] - c[0], p[1] - c[1]);
        [(cos * dx + sin * dy) / s, (-sin * dx + cos * dy) / s]
    }

    #[inline]
    pub fn to_image(&self, u: [f64; 2], t: f64) -> [f64; 2] {
        let c = self.center_at(t);
        let (sin, cos) = self.angle_at(t).sin_cos();
        let s = self.scale_at(t);
        [
            c[0] + s * (cos * u[0] - sin * u[1]),
            c[1] + s * (sin * u[0] + cos * u[1]),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub shape: Shape,
    pub texture: Texture,
    pub trajectory: Trajectory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Background {
    pub texture: Texture,
    /// Pixels per frame.
    pub velocity: [f64; 2],
}

/// Full description of a synthetic scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub seed: u64,
    pub objects: Vec<SceneObject>,
    /// Permutation of object indices, bottom first and topmost last.
    pub depth_order: Vec<usize>,
    pub background: Background,
    pub num_frames: usize,
    pub height: usize,
    pub width: usize,
    pub motion_blur: bool,
}

/// Parameter families mirroring the clean / motion-blurred / long-video splits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenePreset {
    CvoLikeClean,
    CvoLikeFinal,
    CvoLikeExtended,
}

impl ScenePreset {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "cvo-like-clean" => Some(ScenePreset::CvoLikeClean),
            "cvo-like-final" => Some(ScenePreset::CvoLikeFinal),
            "cvo-like-extended" => Some(ScenePreset::CvoLikeExtended),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ScenePreset::CvoLikeClean => "cvo-like-clean",
            ScenePreset::CvoLikeFinal => "cvo-like-final",
            ScenePreset::CvoLikeExtended => "cvo-like-extended",
        }
    }

    pub fn default_num_frames(&self) -> usize {
        match self {
            ScenePreset::CvoLikeClean | ScenePreset::CvoLikeFinal => 8,
            ScenePreset::CvoLikeExtended => 24,
        }
    }

    pub fn motion_blur(&self) -> bool {
        matches!(self, ScenePreset::CvoLikeFinal)
    }
}

impl SceneSpec {
    pub fn num_objects(&self) -> usize {
        self.objects.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_frames < 2 {
            return Err(DotError::Spec(format!("need at least 2 frames, got {}", self.num_frames)));
        }
        if self.height == 0 || self.width == 0 {
            return Err(DotError::Spec("frame size must be positive".into()));
        }
        if self.objects.is_empty() {
            return Err(DotError::Spec("a scene needs at least one object".into()));
        }
        let mut seen = vec![false; self.objects.len()];
        if self.depth_order.len() != self.objects.len() {
            return Err(DotError::Spec("depth order must list every object once".into()));
        }
        for &i in &self.depth_order {
            if i >= seen.len() || seen[i] {
                return Err(DotError::Spec("depth order is not a permutation".into()));
            }
            seen[i] = true;
        }
        for (i, o) in self.objects.iter().enumerate() {
            let area = o.shape.area();
            if !area.is_finite() || area <= 0.0 {
                return Err(DotError::Spec(format!("object {i} has zero area")));
            }
            if o.trajectory.scale.is_nan() || o.trajectory.scale <= 0.0 {
                return Err(DotError::Spec(format!("object {i} has non-positive scale")));
            }
        }
        let (w, h) = (self.width as f64, self.height as f64);
        for t in 0..self.num_frames {
            let any_in = self.objects.iter().any(|o| {
                let c = o.trajectory.center_at(t as f64);
                c[0] >= -0.5 && c[0] < w - 0.5 && c[1] >= -0.5 && c[1] < h - 0.5
            });
            if !any_in {
                return Err(DotError::Spec(format!("no object inside the frame at t={t}")));
            }
        }
        Ok(())
    }

    /// Random scene drawn from a preset's parameter family.
    pub fn random(seed: u64, preset: ScenePreset, height: usize, width: usize, num_frames: Option<usize>) -> Self {
        let num_frames = num_frames.unwrap_or(preset.default_num_frames());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let extent = height.min(width) as f64;
        // Long videos move slower per frame so that objects stay around.
        let speed = 2.4 * (8.0 / num_frames as f64).sqrt().min(1.0) * extent / 64.0;
        loop {
            let n = rng.random_range(2..=4usize);
            let mut objects = Vec::with_capacity(n);
            for _ in 0..n {
                let a = rng.random_range(0.08..0.22) * extent;
                let b = rng.random_range(0.08..0.22) * extent;
                let shape = if rng.random_bool(0.5) {
                    Shape::Rectangle {
                        half_width: a,
                        half_height: b,
                    }
                } else {
                    Shape::Ellipse {
                        radius_x: a,
                        radius_y: b,
                    }
                };
                let trajectory = Trajectory {
                    center: [
                        rng.random_range(0.15..0.85) * width as f64,
                        rng.random_range(0.15..0.85) * height as f64,
                    ],
                    velocity: [rng.random_range(-speed..speed), rng.random_range(-speed..speed)],
                    acceleration: [
                        rng.random_range(-0.05..0.05) * speed,
                        rng.random_range(0.0..0.15) * speed,
                    ],
                    angle: rng.random_range(0.0..std::f64::consts::TAU),
                    angular_velocity: rng.random_range(-0.06..0.06),
                    scale: 1.0,
                    scale_rate: rng.random_range(-0.015..0.015),
                };
                objects.push(SceneObject {
                    shape,
                    texture: Texture::random(&mut rng, extent),
                    trajectory,
                });
            }
            let mut depth_order: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                let j = rng.random_range(0..=i);
                depth_order.swap(i, j);
            }
            let bg_speed = 0.4 * speed;
            let spec = SceneSpec {
                seed,
                objects,
                depth_order,
                background: Background {
                    texture: Texture::random(&mut rng, extent),
                    velocity: [
                        rng.random_range(-bg_speed..bg_speed),
                        rng.random_range(-bg_speed..bg_speed),
                    ],
                },
                num_frames,
                height,
                width,
                motion_blur: preset.motion_blur(),
            };
            if spec.validate().is_ok() {
                return spec;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn local_image_round_trip() {
        let tr = Trajectory {
            center: [10.0, 20.0],
            velocity: [1.0, -0.5],
            acceleration: [0.1, 0.2],
            angle: 0.3,
            angular_velocity: 0.05,
            scale: 1.2,
            scale_rate: 0.01,
        };
        let p = [13.0, 17.5];
        for t in [0.0, 1.5, 4.0] {
            let q = tr.to_image(tr.to_local(p, t), t);
            assert!((q[0] - p[0]).abs() < 1e-12 && (q[1] - p[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn random_specs_validate_and_are_deterministic() {
        for seed in 0..20 {
            let a = SceneSpec::random(seed, ScenePreset::CvoLikeClean, 64, 64, None);
            a.validate().unwrap();
            assert_eq!(a, SceneSpec::random(seed, ScenePreset::CvoLikeClean, 64, 64, None));
        }
    }

    #[test]
    fn zero_area_object_is_a_spec_error() {
        let mut spec = SceneSpec::random(1, ScenePreset::CvoLikeClean, 32, 32, None);
        spec.objects[0].shape = Shape::Ellipse {
            radius_x: 0.0,
            radius_y: 3.0,
        };
        assert!(matches!(spec.validate(), Err(DotError::Spec(_))));
    }

    #[test]
    fn bad_depth_order_is_rejected() {
        let mut spec = SceneSpec::random(2, ScenePreset::CvoLikeClean, 32, 32, None);
        spec.depth_order[0] = spec.depth_order[1];
        assert!(spec.validate().is_err());
    }

    #[test]
    fn preset_names_round_trip() {
        for p in [
            ScenePreset::CvoLikeClean,
            ScenePreset::CvoLikeFinal,
            ScenePreset::CvoLikeExtended,
        ] {
            assert_eq!(ScenePreset::parse(p.name()), Some(p));
        }
        assert_eq!(ScenePreset::parse("kubric"), None);
    }
}
