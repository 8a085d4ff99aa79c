//! Domain types shared by every stage of the pipeline.
//!
//! Coordinates follow the `(x, y) = (column, row)` convention with the origin
//! at the center of the top-left pixel. Flows are stored as interleaved
//! `(dx, dy)` pairs in row-major order.

use serde::{Deserialize, Serialize};

use crate::error::{DotError, Result};

/// Default visibility threshold applied to soft masks.
pub const DEFAULT_TAU: f32 = 0.8;

/// A single RGB frame, row-major with interleaved channels, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl Frame {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != height * width * 3 {
            return Err(DotError::Shape(format!(
                "frame buffer has {} values, expected {}x{}x3",
                data.len(),
                height,
                width
            )));
        }
        Ok(Frame {
            height,
            width,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Frame {
            height,
            width,
            data: vec![0.0; height * width * 3],
        }
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }
}

/// An ordered sequence of frames sharing one resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct Video {
    frames: Vec<Frame>,
    pub frame_rate: f32,
}

impl Video {
    pub fn new(frames: Vec<Frame>, frame_rate: f32) -> Result<Self> {
        if frames.len() < 2 {
            return Err(DotError::Shape(format!(
                "a video needs at least 2 frames, got {}",
                frames.len()
            )));
        }
        let (h, w) = (frames[0].height, frames[0].width);
        for (i, f) in frames.iter().enumerate() {
            if f.height != h || f.width != w {
                return Err(DotError::Shape(format!(
                    "frame {i} is {}x{}, expected {h}x{w}",
                    f.height, f.width
                )));
            }
            if f.data.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(DotError::Invalid(format!(
                    "frame {i} has values outside [0, 1]"
                )));
            }
        }
        Ok(Video { frames, frame_rate })
    }

    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn height(&self) -> usize {
        self.frames[0].height
    }

    pub fn width(&self) -> usize {
        self.frames[0].width
    }

    pub fn frame(&self, t: usize) -> Result<&Frame> {
        self.frames.get(t).ok_or(DotError::Index {
            index: t,
            len: self.frames.len(),
        })
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }
}

/// Position and visibility of one tracked point in one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackPoint {
    pub x: f32,
    pub y: f32,
    pub visible: bool,
}

impl TrackPoint {
    pub fn new(x: f32, y: f32, visible: bool) -> Self {
        TrackPoint { x, y, visible }
    }
}

/// Where a set of tracks came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TrackSource {
    #[default]
    Sampled,
    GroundTruth,
}

/// `N` tracks, each spanning the same `T` frames.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackSet {
    num_frames: usize,
    tracks: Vec<Vec<TrackPoint>>,
    pub source: TrackSource,
}

impl TrackSet {
    pub fn new(num_frames: usize, tracks: Vec<Vec<TrackPoint>>, source: TrackSource) -> Result<Self> {
        if tracks.is_empty() {
            return Err(DotError::Shape("a track set needs at least one track".into()));
        }
        for (i, tr) in tracks.iter().enumerate() {
            if tr.len() != num_frames {
                return Err(DotError::Shape(format!(
                    "track {i} spans {} frames, expected {num_frames}",
                    tr.len()
                )));
            }
            if tr.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
                return Err(DotError::Invalid(format!("track {i} has a non-finite position")));
            }
        }
        Ok(TrackSet {
            num_frames,
            tracks,
            source,
        })
    }

    pub fn num_tracks(&self) -> usize {
        self.tracks.len()
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn track(&self, i: usize) -> &[TrackPoint] {
        &self.tracks[i]
    }

    pub fn tracks(&self) -> &[Vec<TrackPoint>] {
        &self.tracks
    }

    /// Point `i` at frame `t`.
    #[inline]
    pub fn point(&self, i: usize, t: usize) -> TrackPoint {
        self.tracks[i][t]
    }

    /// Indices of tracks visible at frame `s`.
    pub fn visible_at(&self, s: usize) -> Vec<usize> {
        (0..self.tracks.len())
            .filter(|&i| self.tracks[i][s].visible)
            .collect()
    }

    pub(crate) fn check_frame(&self, t: usize) -> Result<()> {
        if t >= self.num_frames {
            return Err(DotError::Index {
                index: t,
                len: self.num_frames,
            });
        }
        Ok(())
    }
}

/// Resolution a flow or mask lives at.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resolution {
    Fine,
    /// Downsampled by the patch size.
    Coarse { patch: usize },
}

/// Dense displacement field, interleaved `(dx, dy)` per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
    pub resolution: Resolution,
}

impl FlowField {
    pub fn new(height: usize, width: usize, data: Vec<f32>, resolution: Resolution) -> Result<Self> {
        if data.len() != height * width * 2 {
            return Err(DotError::Shape(format!(
                "flow buffer has {} values, expected {height}x{width}x2",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(DotError::Invalid("flow contains non-finite values".into()));
        }
        Ok(FlowField {
            height,
            width,
            data,
            resolution,
        })
    }

    pub fn zeros(height: usize, width: usize, resolution: Resolution) -> Self {
        FlowField {
            height,
            width,
            data: vec![0.0; height * width * 2],
            resolution,
        }
    }

    pub fn constant(height: usize, width: usize, d: [f32; 2]) -> Self {
        let mut data = Vec::with_capacity(height * width * 2);
        for _ in 0..height * width {
            data.extend_from_slice(&d);
        }
        FlowField {
            height,
            width,
            data,
            resolution: Resolution::Fine,
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f32; 2] {
        let i = (y * self.width + x) * 2;
        [self.data[i], self.data[i + 1]]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, d: [f32; 2]) {
        let i = (y * self.width + x) * 2;
        self.data[i] = d[0];
        self.data[i + 1] = d[1];
    }

    /// Bilinear lookup with coordinates clamped to the pixel-center grid.
    pub fn sample_bilinear(&self, x: f32, y: f32) -> [f32; 2] {
        let xc = x.clamp(0.0, (self.width - 1) as f32);
        let yc = y.clamp(0.0, (self.height - 1) as f32);
        let x0 = (xc.floor() as usize).min(self.width - 1);
        let y0 = (yc.floor() as usize).min(self.height - 1);
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = xc - x0 as f32;
        let fy = yc - y0 as f32;
        let mut out = [0.0f32; 2];
        for (c, o) in out.iter_mut().enumerate() {
            let v00 = self.data[(y0 * self.width + x0) * 2 + c];
            let v10 = self.data[(y0 * self.width + x1) * 2 + c];
            let v01 = self.data[(y1 * self.width + x0) * 2 + c];
            let v11 = self.data[(y1 * self.width + x1) * 2 + c];
            *o = (1.0 - fy) * ((1.0 - fx) * v00 + fx * v10) + fy * ((1.0 - fx) * v01 + fx * v11);
        }
        out
    }

    /// Channel `c` (0 = dx, 1 = dy) as a planar buffer.
    pub fn channel(&self, c: usize) -> Vec<f32> {
        self.data.iter().skip(c).step_by(2).copied().collect()
    }

    pub fn scaled(&self, factor: f32) -> FlowField {
        FlowField {
            data: self.data.iter().map(|v| v * factor).collect(),
            ..self.clone()
        }
    }
}

/// Per-pixel visibility, soft in `[0, 1]` or binary.
#[derive(Debug, Clone, PartialEq)]
pub struct VisibilityMask {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
    pub binary: bool,
}

impl VisibilityMask {
    pub fn new(height: usize, width: usize, data: Vec<f32>, binary: bool) -> Result<Self> {
        if data.len() != height * width {
            return Err(DotError::Shape(format!(
                "mask buffer has {} values, expected {height}x{width}",
                data.len()
            )));
        }
        if binary {
            if data.iter().any(|&v| v != 0.0 && v != 1.0) {
                return Err(DotError::Invalid("binary mask holds values outside {0, 1}".into()));
            }
        } else if data.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(DotError::Invalid("soft mask holds values outside [0, 1]".into()));
        }
        Ok(VisibilityMask {
            height,
            width,
            data,
            binary,
        })
    }

    pub fn filled(height: usize, width: usize, value: bool) -> Self {
        VisibilityMask {
            height,
            width,
            data: vec![if value { 1.0 } else { 0.0 }; height * width],
            binary: true,
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    /// Threshold at `tau` with a `>=` comparison.
    pub fn binarize(&self, tau: f32) -> VisibilityMask {
        VisibilityMask {
            height: self.height,
            width: self.width,
            data: self
                .data
                .iter()
                .map(|&v| if v >= tau { 1.0 } else { 0.0 })
                .collect(),
            binary: true,
        }
    }

    pub fn is_visible(&self, x: usize, y: usize) -> bool {
        self.get(x, y) >= 0.5
    }
}

/// Threshold a soft mask; see [`VisibilityMask::binarize`].
pub fn binarize_mask(mask: &VisibilityMask, tau: f32) -> VisibilityMask {
    mask.binarize(tau)
}

/// Flow and visibility metrics for one prediction (or an aggregate).
///
/// Splits with no pixels are `None` rather than zero.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub epe_all: Option<f64>,
    pub epe_vis: Option<f64>,
    pub epe_occ: Option<f64>,
    pub iou_occ: Option<f64>,
    pub aj: Option<f64>,
    pub delta_avg: Option<f64>,
    pub oa: Option<f64>,
    pub wall_time: Option<f64>,
}
