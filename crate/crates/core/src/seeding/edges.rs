use crate::error::{DotError, Result};
use crate::types::{FlowField, Video};

/// Relative edge threshold against the 99th percentile of the magnitude.
const EDGE_FRACTION_OF_P99: f32 = 0.1;

/// Motion-boundary strength per pixel and the thresholded edge set.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeMap {
    pub height: usize,
    pub width: usize,
    pub magnitude: Vec<f32>,
    pub edges: Vec<bool>,
}

impl EdgeMap {
    /// Edge map from an explicit edge set (magnitude 1 on edges).
    pub fn from_edges(height: usize, width: usize, edges: Vec<bool>) -> Self {
        let magnitude = edges.iter().map(|&e| if e { 1.0 } else { 0.0 }).collect();
        EdgeMap {
            height,
            width,
            magnitude,
            edges,
        }
    }

    pub fn num_edges(&self) -> usize {
        self.edges.iter().filter(|&&e| e).count()
    }
}

/// 3x3 Sobel gradient magnitude of a planar image with replicated borders.
pub fn sobel_magnitude(plane: &[f32], height: usize, width: usize) -> Vec<f32> {
    let at = |x: isize, y: isize| {
        let xc = x.clamp(0, width as isize - 1) as usize;
        let yc = y.clamp(0, height as isize - 1) as usize;
        plane[yc * width + xc]
    };
    let mut out = vec![0.0; height * width];
    for y in 0..height as isize {
        for x in 0..width as isize {
            let gx = -at(x - 1, y - 1) + at(x + 1, y - 1) - 2.0 * at(x - 1, y) + 2.0 * at(x + 1, y)
                - at(x - 1, y + 1)
                + at(x + 1, y + 1);
            let gy = -at(x - 1, y - 1) - 2.0 * at(x, y - 1) - at(x + 1, y - 1)
                + at(x - 1, y + 1)
                + 2.0 * at(x, y + 1)
                + at(x + 1, y + 1);
            out[y as usize * width + x as usize] = (gx * gx + gy * gy).sqrt();
        }
    }
    out
}

fn percentile_99(values: &[f32]) -> f32 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f32::total_cmp);
    let rank = ((0.99 * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

/// Motion edges of a video given flows for each consecutive frame pair.
///
/// Per pair, the Sobel magnitudes of the two flow channels are summed; the
/// per-pixel maximum over pairs is thresholded at a fraction of its 99th
/// percentile.
pub fn flow_edges(video: &Video, pair_flows: &[FlowField]) -> Result<EdgeMap> {
    let (h, w) = (video.height(), video.width());
    if pair_flows.len() + 1 != video.num_frames() {
        return Err(DotError::Shape(format!(
            "{} pair flows for a {}-frame video",
            pair_flows.len(),
            video.num_frames()
        )));
    }
    let mut magnitude = vec![0.0f32; h * w];
    for (i, f) in pair_flows.iter().enumerate() {
        if f.height != h || f.width != w {
            return Err(DotError::Shape(format!(
                "pair flow {i} is {}x{}, video is {h}x{w}",
                f.height, f.width
            )));
        }
        let mx = sobel_magnitude(&f.channel(0), h, w);
        let my = sobel_magnitude(&f.channel(1), h, w);
        for ((m, a), b) in magnitude.iter_mut().zip(mx).zip(my) {
            *m = m.max(a + b);
        }
    }
    let threshold = EDGE_FRACTION_OF_P99 * percentile_99(&magnitude);
    let edges = magnitude.iter().map(|&m| m > threshold).collect();
    Ok(EdgeMap {
        height: h,
        width: w,
        magnitude,
        edges,
    })
}
