use super::{assemble, cell_center, check_args, coarse_dims, sq_dist, visible_sites, CoarseEstimate};
use crate::error::{DotError, Result};
use crate::types::TrackSet;

/// Uniform bucket grid over 2-D sites, stored in compressed-row form.
///
/// Memory is `O(sites + buckets)`; nearest queries expand square rings of
/// buckets until no unvisited bucket can hold a closer site.
#[derive(Debug, Clone)]
pub struct SiteGrid {
    origin: (f64, f64),
    cell: f64,
    cols: usize,
    rows: usize,
    /// `offsets[b]..offsets[b+1]` indexes `items` for bucket `b`.
    offsets: Vec<u32>,
    /// Positions into `sites`, ascending within each bucket.
    items: Vec<u32>,
    sites: Vec<(usize, (f64, f64))>,
}

impl SiteGrid {
    /// `bounds` must enclose every site and every later query point.
    pub fn build(sites: Vec<(usize, (f64, f64))>, bounds: ((f64, f64), (f64, f64)), cell: f64) -> Self {
        let ((x0, y0), (x1, y1)) = bounds;
        let cols = ((x1 - x0) / cell).floor() as usize + 1;
        let rows = ((y1 - y0) / cell).floor() as usize + 1;
        let mut grid = SiteGrid {
            origin: (x0, y0),
            cell,
            cols,
            rows,
            offsets: vec![0; cols * rows + 1],
            items: vec![0; sites.len()],
            sites: Vec::new(),
        };
        let buckets: Vec<usize> = sites.iter().map(|&(_, p)| grid.bucket_of(p)).collect();
        for &b in &buckets {
            grid.offsets[b + 1] += 1;
        }
        for b in 0..cols * rows {
            grid.offsets[b + 1] += grid.offsets[b];
        }
        let mut fill = grid.offsets.clone();
        for (k, &b) in buckets.iter().enumerate() {
            grid.items[fill[b] as usize] = k as u32;
            fill[b] += 1;
        }
        grid.sites = sites;
        grid
    }

    #[inline]
    fn coords_of(&self, p: (f64, f64)) -> (usize, usize) {
        let bx = ((p.0 - self.origin.0) / self.cell).floor().max(0.0) as usize;
        let by = ((p.1 - self.origin.1) / self.cell).floor().max(0.0) as usize;
        (bx.min(self.cols - 1), by.min(self.rows - 1))
    }

    #[inline]
    fn bucket_of(&self, p: (f64, f64)) -> usize {
        let (bx, by) = self.coords_of(p);
        by * self.cols + bx
    }

    #[inline]
    fn scan_bucket(&self, bx: usize, by: usize, q: (f64, f64), best: &mut (f64, usize)) {
        let b = by * self.cols + bx;
        for &k in &self.items[self.offsets[b] as usize..self.offsets[b + 1] as usize] {
            let (i, p) = self.sites[k as usize];
            let d = sq_dist(p, q);
            if d < best.0 || (d == best.0 && i < best.1) {
                *best = (d, i);
            }
        }
    }

    /// Index of the closest site, ties broken by the lowest index.
    pub fn nearest(&self, q: (f64, f64)) -> Option<usize> {
        if self.sites.is_empty() {
            return None;
        }
        let (bx, by) = self.coords_of(q);
        let (bx, by) = (bx as isize, by as isize);
        let (cols, rows) = (self.cols as isize, self.rows as isize);
        let max_ring = bx.max(cols - 1 - bx).max(by).max(rows - 1 - by);
        let mut best = (f64::INFINITY, usize::MAX);
        for r in 0..=max_ring {
            let y_lo = (by - r).max(0);
            let y_hi = (by + r).min(rows - 1);
            for y in y_lo..=y_hi {
                if y == by - r || y == by + r {
                    for x in (bx - r).max(0)..=(bx + r).min(cols - 1) {
                        self.scan_bucket(x as usize, y as usize, q, &mut best);
                    }
                } else {
                    if bx - r >= 0 {
                        self.scan_bucket((bx - r) as usize, y as usize, q, &mut best);
                    }
                    if r > 0 && bx + r < cols {
                        self.scan_bucket((bx + r) as usize, y as usize, q, &mut best);
                    }
                }
            }
            // Sites beyond ring r are at least r cells away; the slack absorbs
            // rounding in bucket assignment. Strict comparison keeps exact ties.
            let reach = (r as f64 - 1e-6) * self.cell;
            if reach > 0.0 && best.0 < reach * reach {
                break;
            }
        }
        Some(best.1)
    }
}

/// Same result as [`super::interpolate`], bit for bit, via a bucket grid.
///
/// `cell_size` defaults to roughly one visible track per bucket.
pub fn interpolate_bucketed(
    tracks: &TrackSet,
    s: usize,
    t: usize,
    height: usize,
    width: usize,
    patch: usize,
    cell_size: Option<f64>,
) -> Result<CoarseEstimate> {
    check_args(tracks, s, t, patch)?;
    let sites = visible_sites(tracks, s);
    if sites.is_empty() {
        return Err(DotError::NoVisibleTracks(s));
    }
    let (hc, wc) = coarse_dims(height, width, patch);
    let first = cell_center(0, 0, patch);
    let last = cell_center(hc - 1, wc - 1, patch);
    let (mut lo, mut hi) = (first, last);
    for &(_, p) in &sites {
        lo = (lo.0.min(p.0), lo.1.min(p.1));
        hi = (hi.0.max(p.0), hi.1.max(p.1));
    }
    let area = (hi.0 - lo.0 + 1.0) * (hi.1 - lo.1 + 1.0);
    let cell = cell_size
        .unwrap_or_else(|| (area / sites.len() as f64).sqrt())
        .max(1.0);
    let grid = SiteGrid::build(sites, (lo, hi), cell);
    let winners: Vec<usize> = (0..hc * wc)
        .map(|c| {
            grid.nearest(cell_center(c / wc, c % wc, patch))
                .expect("grid has sites")
        })
        .collect();
    Ok(assemble(tracks, s, t, hc, wc, patch, &winners))
}
