//! Nearest-neighbor densification of sparse tracks.
//!
//! Every coarse cell takes the displacement and target visibility of the
//! closest track visible at the source frame (exact Euclidean distance, ties
//! to the lowest track index). Coarse cell `(i, j)` is centered at pixel
//! `(P*(j+0.5)-0.5, P*(i+0.5)-0.5)`, the center of its `P x P` patch.

mod bucketed;

pub use bucketed::{interpolate_bucketed, SiteGrid};

use crate::error::{DotError, Result};
use crate::types::{FlowField, Resolution, TrackSet, VisibilityMask};

/// Coarse flow and binary visibility at `ceil(H/P) x ceil(W/P)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarseEstimate {
    pub flow: FlowField,
    pub mask: VisibilityMask,
    pub patch: usize,
}

/// Coarse grid size for an `h x w` frame.
pub fn coarse_dims(height: usize, width: usize, patch: usize) -> (usize, usize) {
    (height.div_ceil(patch), width.div_ceil(patch))
}

#[inline]
pub fn cell_center(row: usize, col: usize, patch: usize) -> (f64, f64) {
    let p = patch as f64;
    (p * (col as f64 + 0.5) - 0.5, p * (row as f64 + 0.5) - 0.5)
}

#[inline]
pub(crate) fn sq_dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    let dx = a.0 - b.0;
    let dy = a.1 - b.1;
    dx * dx + dy * dy
}

/// Source positions of the tracks visible at `s`, with their indices.
pub(crate) fn visible_sites(tracks: &TrackSet, s: usize) -> Vec<(usize, (f64, f64))> {
    (0..tracks.num_tracks())
        .filter_map(|i| {
            let p = tracks.point(i, s);
            p.visible.then_some((i, (p.x as f64, p.y as f64)))
        })
        .collect()
}

fn check_args(tracks: &TrackSet, s: usize, t: usize, patch: usize) -> Result<()> {
    tracks.check_frame(s)?;
    tracks.check_frame(t)?;
    if patch == 0 {
        return Err(DotError::Invalid("patch size must be positive".into()));
    }
    Ok(())
}

/// Assemble the estimate from the winning track index of every cell.
pub(crate) fn assemble(
    tracks: &TrackSet,
    s: usize,
    t: usize,
    hc: usize,
    wc: usize,
    patch: usize,
    winners: &[usize],
) -> CoarseEstimate {
    let mut flow = FlowField::zeros(hc, wc, Resolution::Coarse { patch });
    let mut mask = vec![0.0f32; hc * wc];
    for (c, &i) in winners.iter().enumerate() {
        let (ps, pt) = (tracks.point(i, s), tracks.point(i, t));
        flow.data[2 * c] = pt.x - ps.x;
        flow.data[2 * c + 1] = pt.y - ps.y;
        mask[c] = if pt.visible { 1.0 } else { 0.0 };
    }
    CoarseEstimate {
        flow,
        mask: VisibilityMask {
            height: hc,
            width: wc,
            data: mask,
            binary: true,
        },
        patch,
    }
}

/// Direct nearest-visible-track interpolation, scanning all tracks per cell.
pub fn interpolate(
    tracks: &TrackSet,
    s: usize,
    t: usize,
    height: usize,
    width: usize,
    patch: usize,
) -> Result<CoarseEstimate> {
    check_args(tracks, s, t, patch)?;
    let sites = visible_sites(tracks, s);
    if sites.is_empty() {
        return Err(DotError::NoVisibleTracks(s));
    }
    let (hc, wc) = coarse_dims(height, width, patch);
    let mut winners = Vec::with_capacity(hc * wc);
    for row in 0..hc {
        for col in 0..wc {
            let q = cell_center(row, col, patch);
            let mut best = (f64::INFINITY, usize::MAX);
            for &(i, p) in &sites {
                let d = sq_dist(p, q);
                if d < best.0 {
                    best = (d, i);
                }
            }
            winners.push(best.1);
        }
    }
    Ok(assemble(tracks, s, t, hc, wc, patch, &winners))
}

impl CoarseEstimate {
    /// Replicate each coarse value over its patch and crop to `h x w`.
    pub fn upsample_nearest(&self, height: usize, width: usize) -> (FlowField, VisibilityMask) {
        let p = self.patch;
        let mut flow = FlowField::zeros(height, width, Resolution::Fine);
        let mut mask = vec![0.0f32; height * width];
        for y in 0..height {
            for x in 0..width {
                let c = (y / p) * self.flow.width + x / p;
                flow.set(x, y, [self.flow.data[2 * c], self.flow.data[2 * c + 1]]);
                mask[y * width + x] = self.mask.data[c];
            }
        }
        (
            flow,
            VisibilityMask {
                height,
                width,
                data: mask,
                binary: self.mask.binary,
            },
        )
    }

    /// Zero motion and all-visible, used when no track information is available.
    pub fn zero(height: usize, width: usize, patch: usize) -> Self {
        let (hc, wc) = coarse_dims(height, width, patch);
        CoarseEstimate {
            flow: FlowField::zeros(hc, wc, Resolution::Coarse { patch }),
            mask: VisibilityMask::filled(hc, wc, true),
            patch,
        }
    }
}
