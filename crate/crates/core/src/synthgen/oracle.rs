use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::SceneSpec;
use crate::error::{DotError, Result};
use crate::types::{Frame, FlowField, Resolution, TrackPoint, TrackSet, TrackSource, Video, VisibilityMask};

/// Sub-frame offsets averaged when motion blur is on.
const BLUR_OFFSETS: [f64; 4] = [-0.1875, -0.0625, 0.0625, 0.1875];

/// Noise applied to ground-truth tracks to imitate an imperfect tracker.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorruptionSpec {
    /// Standard deviation of the per-axis Gaussian position jitter, in pixels.
    pub sigma: f32,
    /// Probability of flipping each visibility flag.
    pub flip_prob: f64,
    pub seed: u64,
}

/// Surface a pixel belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Owner {
    Background,
    Object(usize),
}

/// A generated scene: its video plus the analytic motion oracle.
///
/// Read-only after construction.
#[derive(Debug, Clone)]
pub struct Scene {
    spec: SceneSpec,
    /// `rank[i]` = position of object `i` in the depth order (larger is closer).
    rank: Vec<usize>,
    video: Video,
}

impl Scene {
    pub fn generate(spec: SceneSpec) -> Result<Scene> {
        spec.validate()?;
        let mut rank = vec![0; spec.objects.len()];
        for (r, &i) in spec.depth_order.iter().enumerate() {
            rank[i] = r;
        }
        let mut scene = Scene {
            spec,
            rank,
            video: Video::new(vec![Frame::zeros(1, 1), Frame::zeros(1, 1)], 0.0)?,
        };
        let frames = (0..scene.spec.num_frames).map(|t| scene.render_frame(t)).collect();
        scene.video = Video::new(frames, 24.0)?;
        Ok(scene)
    }

    pub fn spec(&self) -> &SceneSpec {
        &self.spec
    }

    pub fn video(&self) -> &Video {
        &self.video
    }

    pub fn num_frames(&self) -> usize {
        self.spec.num_frames
    }

    fn check(&self, t: usize) -> Result<()> {
        if t >= self.spec.num_frames {
            return Err(DotError::Index {
                index: t,
                len: self.spec.num_frames,
            });
        }
        Ok(())
    }

    fn owner_at(&self, p: [f64; 2], t: f64) -> Owner {
        for &i in self.spec.depth_order.iter().rev() {
            let o = &self.spec.objects[i];
            if o.shape.contains(o.trajectory.to_local(p, t)) {
                return Owner::Object(i);
            }
        }
        Owner::Background
    }

    fn color_at(&self, p: [f64; 2], t: f64) -> [f64; 3] {
        match self.owner_at(p, t) {
            Owner::Object(i) => {
                let o = &self.spec.objects[i];
                o.texture.color(o.trajectory.to_local(p, t))
            }
            Owner::Background => {
                let v = self.spec.background.velocity;
                self.spec.background.texture.color([p[0] - v[0] * t, p[1] - v[1] * t])
            }
        }
    }

    fn render_at(&self, t: f64) -> Vec<f64> {
        let (h, w) = (self.spec.height, self.spec.width);
        let mut out = Vec::with_capacity(h * w * 3);
        for y in 0..h {
            for x in 0..w {
                out.extend_from_slice(&self.color_at([x as f64, y as f64], t));
            }
        }
        out
    }

    pub fn render_frame(&self, t: usize) -> Frame {
        let (h, w) = (self.spec.height, self.spec.width);
        let data = if self.spec.motion_blur {
            let mut acc = vec![0.0f64; h * w * 3];
            for dt in BLUR_OFFSETS {
                for (a, v) in acc.iter_mut().zip(self.render_at(t as f64 + dt)) {
                    *a += v;
                }
            }
            acc.iter().map(|v| (v / BLUR_OFFSETS.len() as f64) as f32).collect()
        } else {
            self.render_at(t as f64).into_iter().map(|v| v as f32).collect()
        };
        Frame { height: h, width: w, data }
    }

    fn transport_owned(&self, owner: Owner, p: [f64; 2], s: f64, t: f64) -> [f64; 2] {
        match owner {
            Owner::Object(i) => {
                let tr = &self.spec.objects[i].trajectory;
                tr.to_image(tr.to_local(p, s), t)
            }
            Owner::Background => {
                let v = self.spec.background.velocity;
                [p[0] + v[0] * (t - s), p[1] + v[1] * (t - s)]
            }
        }
    }

    fn in_frame(&self, q: [f64; 2]) -> bool {
        q[0] >= -0.5
            && q[0] < self.spec.width as f64 - 0.5
            && q[1] >= -0.5
            && q[1] < self.spec.height as f64 - 0.5
    }

    /// Is a point on `owner` at `q` hidden by something closer at time `t`?
    fn occluded(&self, owner: Owner, q: [f64; 2], t: f64) -> bool {
        match owner {
            Owner::Background => self.owner_at(q, t) != Owner::Background,
            Owner::Object(i) => {
                let r = self.rank[i];
                self.spec.depth_order[r + 1..].iter().any(|&j| {
                    let o = &self.spec.objects[j];
                    o.shape.contains(o.trajectory.to_local(q, t))
                })
            }
        }
    }

    /// Where the surface point seen at `p` in frame `s` is at frame `t`, and
    /// whether it is visible there (topmost and inside the frame).
    pub fn transport_point(&self, p: [f64; 2], s: usize, t: usize) -> ([f64; 2], bool) {
        let owner = self.owner_at(p, s as f64);
        let q = self.transport_owned(owner, p, s as f64, t as f64);
        let vis = self.in_frame(q) && !self.occluded(owner, q, t as f64);
        (q, vis)
    }

    pub fn ground_truth_pair(&self, s: usize, t: usize) -> Result<(FlowField, VisibilityMask)> {
        self.check(s)?;
        self.check(t)?;
        let (h, w) = (self.spec.height, self.spec.width);
        let mut flow = FlowField::zeros(h, w, Resolution::Fine);
        let mut vis = vec![0.0f32; h * w];
        for y in 0..h {
            for x in 0..w {
                let p = [x as f64, y as f64];
                let (q, v) = if s == t {
                    (p, true)
                } else {
                    self.transport_point(p, s, t)
                };
                flow.set(x, y, [(q[0] - p[0]) as f32, (q[1] - p[1]) as f32]);
                vis[y * w + x] = if v { 1.0 } else { 0.0 };
            }
        }
        Ok((
            flow,
            VisibilityMask {
                height: h,
                width: w,
                data: vis,
                binary: true,
            },
        ))
    }

    pub fn ground_truth_flow(&self, s: usize, t: usize) -> Result<FlowField> {
        Ok(self.ground_truth_pair(s, t)?.0)
    }

    pub fn ground_truth_vis(&self, s: usize, t: usize) -> Result<VisibilityMask> {
        Ok(self.ground_truth_pair(s, t)?.1)
    }

    /// Flows between consecutive frames `(t, t+1)`.
    pub fn consecutive_flows(&self) -> Vec<FlowField> {
        (0..self.spec.num_frames - 1)
            .map(|t| self.ground_truth_flow(t, t + 1).expect("indices in range"))
            .collect()
    }

    /// Exact trajectories of points queried at frame `s`, optionally corrupted.
    pub fn ground_truth_tracks(
        &self,
        queries: &[(f32, f32)],
        s: usize,
        corruption: Option<&CorruptionSpec>,
    ) -> Result<TrackSet> {
        self.check(s)?;
        let n_frames = self.spec.num_frames;
        let mut tracks: Vec<Vec<TrackPoint>> = queries
            .iter()
            .map(|&(x, y)| {
                let p = [x as f64, y as f64];
                (0..n_frames)
                    .map(|t| {
                        if t == s {
                            TrackPoint::new(x, y, self.in_frame(p))
                        } else {
                            let (q, v) = self.transport_point(p, s, t);
                            TrackPoint::new(q[0] as f32, q[1] as f32, v)
                        }
                    })
                    .collect()
            })
            .collect();
        if let Some(c) = corruption {
            corrupt_tracks(&mut tracks, c)?;
        }
        let source = if corruption.is_some() {
            TrackSource::Sampled
        } else {
            TrackSource::GroundTruth
        };
        TrackSet::new(n_frames, tracks, source)
    }
}

fn corrupt_tracks(tracks: &mut [Vec<TrackPoint>], c: &CorruptionSpec) -> Result<()> {
    if !(0.0..=1.0).contains(&c.flip_prob) || c.sigma.is_nan() || c.sigma < 0.0 {
        return Err(DotError::Invalid(format!("bad corruption parameters {c:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let normal = Normal::new(0.0f32, c.sigma.max(f32::MIN_POSITIVE)).expect("finite sigma");
    for tr in tracks.iter_mut() {
        for p in tr.iter_mut() {
            if c.sigma > 0.0 {
                p.x += normal.sample(&mut rng);
                p.y += normal.sample(&mut rng);
            }
            if c.flip_prob > 0.0 && rng.random_bool(c.flip_prob) {
                p.visible = !p.visible;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::{Background, SceneObject, ScenePreset, Shape, Texture, Trajectory};

    fn textured() -> Texture {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        Texture::random(&mut rng, 32.0)
    }

    fn scene_with(objects: Vec<SceneObject>, bg_velocity: [f64; 2], t: usize, size: usize) -> Scene {
        let n = objects.len();
        Scene::generate(SceneSpec {
            seed: 0,
            objects,
            depth_order: (0..n).collect(),
            background: Background {
                texture: textured(),
                velocity: bg_velocity,
            },
            num_frames: t,
            height: size,
            width: size,
            motion_blur: false,
        })
        .unwrap()
    }

    fn rect(center: [f64; 2], velocity: [f64; 2], half: f64) -> SceneObject {
        SceneObject {
            shape: Shape::Rectangle {
                half_width: half,
                half_height: half,
            },
            texture: textured(),
            trajectory: Trajectory::translation(center, velocity),
        }
    }

    #[test]
    fn static_scene_has_zero_flow_and_full_visibility() {
        let scene = scene_with(vec![rect([16.0, 16.0], [0.0, 0.0], 5.0)], [0.0, 0.0], 4, 32);
        let (f, v) = scene.ground_truth_pair(0, 3).unwrap();
        assert!(f.data.iter().all(|&d| d == 0.0));
        assert!(v.data.iter().all(|&m| m == 1.0));
        let tracks = scene.ground_truth_tracks(&[(3.0, 4.0), (16.0, 16.0)], 0, None).unwrap();
        for tr in tracks.tracks() {
            assert!(tr.iter().all(|p| *p == tr[0] && p.visible));
        }
    }

    #[test]
    fn identity_pair_is_zero_and_visible() {
        let scene = Scene::generate(SceneSpec::random(5, ScenePreset::CvoLikeClean, 32, 32, None)).unwrap();
        let (f, v) = scene.ground_truth_pair(2, 2).unwrap();
        assert!(f.data.iter().all(|&d| d == 0.0));
        assert!(v.data.iter().all(|&m| m == 1.0));
    }

    #[test]
    fn translating_rectangle_matches_painter_oracle() {
        // rectangle covers x in [6, 12], y in [12, 18] at t=0 and moves 2 px/frame right
        let scene = scene_with(vec![rect([9.0, 15.0], [2.0, 0.0], 3.0)], [0.0, 0.0], 4, 32);
        let (f, v) = scene.ground_truth_pair(0, 2).unwrap();
        for y in 0..32usize {
            for x in 0..32usize {
                let on_rect = (6..=12).contains(&x) && (12..=18).contains(&y);
                let expect = if on_rect { [4.0, 0.0] } else { [0.0, 0.0] };
                assert_eq!(f.get(x, y), expect, "pixel {x},{y}");
                // painter's algorithm: background hidden if the rectangle covers it at t=2
                let covered = (10..=16).contains(&x) && (12..=18).contains(&y);
                let expect_vis = on_rect || !covered;
                assert_eq!(v.get(x, y) == 1.0, expect_vis, "pixel {x},{y}");
            }
        }
    }

    #[test]
    fn crossing_objects_visibility_matches_depth_test() {
        let a = rect([8.0, 16.0], [3.0, 0.0], 4.0);
        let b = rect([24.0, 16.0], [-3.0, 0.0], 4.0);
        let scene = scene_with(vec![a, b], [0.5, 0.0], 5, 32);
        let (f, v) = scene.ground_truth_pair(0, 3).unwrap();
        let spec = scene.spec();
        for y in 0..32usize {
            for x in 0..32usize {
                // brute force: find carrier at s by scanning all objects in depth order
                let p = [x as f64, y as f64];
                let mut carrier = None;
                for &i in &spec.depth_order {
                    let o = &spec.objects[i];
                    if o.shape.contains(o.trajectory.to_local(p, 0.0)) {
                        carrier = Some(i);
                    }
                }
                let d = f.get(x, y);
                let q = [p[0] + d[0] as f64, p[1] + d[1] as f64];
                let mut top = None;
                for &i in &spec.depth_order {
                    let o = &spec.objects[i];
                    if o.shape.contains(o.trajectory.to_local(q, 3.0)) {
                        top = Some(i);
                    }
                }
                let inside = q[0] >= -0.5 && q[0] < 31.5 && q[1] >= -0.5 && q[1] < 31.5;
                assert_eq!(v.get(x, y) == 1.0, inside && top == carrier, "pixel {x},{y}");
            }
        }
    }

    #[test]
    fn background_translation_is_constant_with_out_of_frame_occlusion() {
        let scene = scene_with(vec![rect([16.0, 16.0], [0.0, 0.0], 0.4)], [1.5, -1.0], 6, 32);
        let (f, v) = scene.ground_truth_pair(1, 4).unwrap();
        for y in 0..32usize {
            for x in 0..32usize {
                if x == 16 && y == 16 {
                    continue;
                }
                assert_eq!(f.get(x, y), [4.5, -3.0]);
                let (qx, qy) = (x as f64 + 4.5, y as f64 - 3.0);
                let inside = qx < 31.5 && qy >= -0.5;
                let hidden = (qx - 16.0).abs() <= 0.4 && (qy - 16.0).abs() <= 0.4;
                assert_eq!(v.get(x, y) == 1.0, inside && !hidden);
            }
        }
    }

    #[test]
    fn rotating_ellipse_matches_rotation_about_center() {
        let obj = SceneObject {
            shape: Shape::Ellipse {
                radius_x: 12.0,
                radius_y: 7.0,
            },
            texture: textured(),
            trajectory: Trajectory {
                angle: -0.1,
                angular_velocity: 0.1,
                ..Trajectory::translation([32.0, 32.0], [0.0, 0.0])
            },
        };
        let scene = scene_with(vec![obj], [0.0, 0.0], 6, 64);
        let f = scene.ground_truth_flow(1, 5).unwrap();
        let dtheta = 0.4f64;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut checked = 0;
        while checked < 20 {
            let x = rng.random_range(22..43usize);
            let y = rng.random_range(27..38usize);
            let (dx, dy) = (x as f64 - 32.0, y as f64 - 32.0);
            if (dx / 12.0).powi(2) + (dy / 7.0).powi(2) > 1.0 {
                continue;
            }
            let expect = [
                32.0 + dtheta.cos() * dx - dtheta.sin() * dy - x as f64,
                32.0 + dtheta.sin() * dx + dtheta.cos() * dy - y as f64,
            ];
            let got = f.get(x, y);
            assert!((got[0] as f64 - expect[0]).abs() < 1e-4);
            assert!((got[1] as f64 - expect[1]).abs() < 1e-4);
            checked += 1;
        }
    }

    #[test]
    fn out_of_range_frame_is_index_error() {
        let scene = Scene::generate(SceneSpec::random(1, ScenePreset::CvoLikeClean, 16, 16, Some(3))).unwrap();
        assert!(matches!(scene.ground_truth_flow(0, 3), Err(DotError::Index { .. })));
    }

    #[test]
    fn noop_corruption_is_identity() {
        let scene = Scene::generate(SceneSpec::random(3, ScenePreset::CvoLikeClean, 32, 32, None)).unwrap();
        let q: Vec<(f32, f32)> = (0..30).map(|i| ((i % 32) as f32, (i / 2) as f32)).collect();
        let clean = scene.ground_truth_tracks(&q, 0, None).unwrap();
        let c = CorruptionSpec {
            sigma: 0.0,
            flip_prob: 0.0,
            seed: 9,
        };
        let noisy = scene.ground_truth_tracks(&q, 0, Some(&c)).unwrap();
        assert_eq!(clean.tracks(), noisy.tracks());
    }

    #[test]
    fn corruption_statistics_match_targets() {
        let scene = Scene::generate(SceneSpec::random(4, ScenePreset::CvoLikeClean, 32, 32, None)).unwrap();
        let q: Vec<(f32, f32)> = (0..2000).map(|i| ((i % 32) as f32, ((i / 32) % 32) as f32)).collect();
        let clean = scene.ground_truth_tracks(&q, 0, None).unwrap();
        let c = CorruptionSpec {
            sigma: 1.0,
            flip_prob: 0.05,
            seed: 17,
        };
        let noisy = scene.ground_truth_tracks(&q, 0, Some(&c)).unwrap();
        let mut norms = Vec::new();
        let mut flips = 0usize;
        for (a, b) in clean.tracks().iter().zip(noisy.tracks()) {
            for (p, r) in a.iter().zip(b) {
                norms.push(((r.x - p.x) as f64).hypot((r.y - p.y) as f64));
                flips += (p.visible != r.visible) as usize;
            }
        }
        let n = norms.len() as f64;
        assert!(n >= 1e4);
        let mean = norms.iter().sum::<f64>() / n;
        let var = norms.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let target = (std::f64::consts::PI / 2.0).sqrt();
        assert!((mean - target).abs() < 3.0 * (var / n).sqrt(), "mean {mean} vs {target}");
        let rate = flips as f64 / n;
        let se = (0.05 * 0.95 / n).sqrt();
        assert!((rate - 0.05).abs() < 3.0 * se, "flip rate {rate}");
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = SceneSpec::random(8, ScenePreset::CvoLikeFinal, 32, 32, None);
        let a = Scene::generate(spec.clone()).unwrap();
        let b = Scene::generate(spec).unwrap();
        assert_eq!(a.video(), b.video());
        assert_eq!(a.ground_truth_pair(0, 7).unwrap(), b.ground_truth_pair(0, 7).unwrap());
    }

    #[test]
    fn motion_blur_only_changes_pixels_that_move() {
        let mut spec = SceneSpec::random(12, ScenePreset::CvoLikeClean, 32, 32, None);
        let clean = Scene::generate(spec.clone()).unwrap();
        spec.motion_blur = true;
        let blurred = Scene::generate(spec).unwrap();
        assert_ne!(clean.video(), blurred.video());
        let still = scene_with(vec![rect([16.0, 16.0], [0.0, 0.0], 5.0)], [0.0, 0.0], 3, 32);
        let mut s2 = still.spec().clone();
        s2.motion_blur = true;
        let still_blur = Scene::generate(s2).unwrap();
        for (a, b) in still.video().frames().iter().zip(still_blur.video().frames()) {
            for (x, y) in a.data.iter().zip(&b.data) {
                assert!((x - y).abs() < 1e-6);
            }
        }
    }
}
