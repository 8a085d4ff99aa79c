use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EdgeMap;
use crate::error::{DotError, Result};

/// How many tracks to spawn and how to split them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingBudget {
    pub num_tracks: usize,
    /// Share of tracks drawn near motion edges.
    pub edge_fraction: f64,
    /// Distance from an edge (pixels) that still counts as near.
    pub edge_radius: f64,
}

impl SamplingBudget {
    pub fn new(num_tracks: usize) -> Self {
        SamplingBudget {
            num_tracks,
            edge_fraction: 0.5,
            edge_radius: 5.0,
        }
    }

    /// Uniform sampling only.
    pub fn uniform(num_tracks: usize) -> Self {
        SamplingBudget {
            edge_fraction: 0.0,
            ..Self::new(num_tracks)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuerySample {
    /// Integer pixel positions `(x, y)` at the anchor frame.
    pub points: Vec<(f32, f32)>,
    /// Set when the edge set was empty and every point was drawn uniformly.
    pub fallback: bool,
}

/// Dilate a binary mask with a disc.
pub(crate) fn dilate(edges: &[bool], height: usize, width: usize, radius: f64) -> Vec<bool> {
    let r = radius.floor() as isize;
    let offsets: Vec<(isize, isize)> = (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)))
        .filter(|&(dx, dy)| ((dx * dx + dy * dy) as f64) <= radius * radius)
        .collect();
    let mut out = vec![false; edges.len()];
    for y in 0..height as isize {
        for x in 0..width as isize {
            if !edges[y as usize * width + x as usize] {
                continue;
            }
            for &(dx, dy) in &offsets {
                let (xx, yy) = (x + dx, y + dy);
                if xx >= 0 && yy >= 0 && (xx as usize) < width && (yy as usize) < height {
                    out[yy as usize * width + xx as usize] = true;
                }
            }
        }
    }
    out
}

/// Draw `budget.num_tracks` distinct pixel positions, a share of them near edges.
pub fn sample_queries(edges: &EdgeMap, budget: &SamplingBudget, seed: u64) -> Result<QuerySample> {
    let (h, w) = (edges.height, edges.width);
    let n = budget.num_tracks;
    if n == 0 || n > h * w {
        return Err(DotError::Invalid(format!("cannot sample {n} tracks from {h}x{w} pixels")));
    }
    if !(0.0..=1.0).contains(&budget.edge_fraction) {
        return Err(DotError::Invalid("edge fraction must lie in [0, 1]".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let near = dilate(&edges.edges, h, w, budget.edge_radius);
    let candidates: Vec<usize> = (0..h * w).filter(|&i| near[i]).collect();
    let fallback = candidates.is_empty();
    let mut taken = vec![false; h * w];
    let mut chosen = Vec::with_capacity(n);
    if !fallback && budget.edge_fraction > 0.0 {
        let want = ((budget.edge_fraction * n as f64).ceil() as usize).min(candidates.len());
        for k in index::sample(&mut rng, candidates.len(), want) {
            let p = candidates[k];
            taken[p] = true;
            chosen.push(p);
        }
    }
    let rest: Vec<usize> = (0..h * w).filter(|&i| !taken[i]).collect();
    for k in index::sample(&mut rng, rest.len(), n - chosen.len()) {
        chosen.push(rest[k]);
    }
    let points = chosen
        .into_iter()
        .map(|p| ((p % w) as f32, (p / w) as f32))
        .collect();
    Ok(QuerySample { points, fallback })
}
