use serde::{Deserialize, Serialize};

use crate::error::{DotError, Result};
use crate::types::TrackPoint;

/// Predicted and ground-truth trajectories of one query point.
#[derive(Debug, Clone, PartialEq)]
pub struct TapQuery {
    pub query_frame: usize,
    pub pred: Vec<TrackPoint>,
    pub gt: Vec<TrackPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TapConfig {
    /// Distance thresholds in the normalized frame.
    pub thresholds: Vec<f64>,
    /// Side of the square frame positions are rescaled to.
    pub norm_size: f64,
    /// Skip each query's own frame.
    pub exclude_query_frame: bool,
}

impl Default for TapConfig {
    fn default() -> Self {
        TapConfig {
            thresholds: vec![1.0, 2.0, 4.0, 8.0, 16.0],
            norm_size: 256.0,
            exclude_query_frame: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TapMetrics {
    /// Average Jaccard; absent when no threshold has a nonzero denominator.
    pub aj: Option<f64>,
    /// Position accuracy on ground-truth visible points; absent without any.
    pub delta_avg: Option<f64>,
    /// Occlusion accuracy.
    pub oa: f64,
}

/// AJ, position accuracy and occlusion accuracy, pooled over all
/// `(query, frame)` pairs. Positions are rescaled from `height x width` to
/// the normalized square first.
pub fn tap_metrics(queries: &[TapQuery], height: usize, width: usize, cfg: &TapConfig) -> Result<TapMetrics> {
    if queries.is_empty() {
        return Err(DotError::Invalid("no queries to evaluate".into()));
    }
    if cfg.thresholds.is_empty() {
        return Err(DotError::Config("no TAP thresholds".into()));
    }
    let sx = cfg.norm_size / width as f64;
    let sy = cfg.norm_size / height as f64;
    let k = cfg.thresholds.len();
    let (mut pairs, mut correct_vis, mut n_gt_vis) = (0usize, 0usize, 0usize);
    let mut within = vec![0usize; k];
    let mut tp = vec![0usize; k];
    let mut fp = vec![0usize; k];
    let mut fn_ = vec![0usize; k];
    for q in queries {
        if q.pred.len() != q.gt.len() {
            return Err(DotError::Shape(format!(
                "trajectory lengths differ: {} predicted, {} ground truth",
                q.pred.len(),
                q.gt.len()
            )));
        }
        for (t, (p, g)) in q.pred.iter().zip(&q.gt).enumerate() {
            if cfg.exclude_query_frame && t == q.query_frame {
                continue;
            }
            pairs += 1;
            correct_vis += (p.visible == g.visible) as usize;
            let dx = (p.x - g.x) as f64 * sx;
            let dy = (p.y - g.y) as f64 * sy;
            let d = (dx * dx + dy * dy).sqrt();
            n_gt_vis += g.visible as usize;
            for (i, &th) in cfg.thresholds.iter().enumerate() {
                let close = d < th;
                if g.visible && close {
                    within[i] += 1;
                }
                match (p.visible, g.visible) {
                    (true, true) if close => tp[i] += 1,
                    (true, true) => {
                        fp[i] += 1;
                        fn_[i] += 1;
                    }
                    (true, false) => fp[i] += 1,
                    (false, true) => fn_[i] += 1,
                    (false, false) => {}
                }
            }
        }
    }
    if pairs == 0 {
        return Err(DotError::Invalid("no (query, frame) pairs left to evaluate".into()));
    }
    let delta_avg = (n_gt_vis > 0).then(|| within.iter().map(|&c| c as f64 / n_gt_vis as f64).sum::<f64>() / k as f64);
    let jac: Vec<f64> = (0..k)
        .filter_map(|i| {
            let den = tp[i] + fp[i] + fn_[i];
            (den > 0).then(|| tp[i] as f64 / den as f64)
        })
        .collect();
    let aj = (!jac.is_empty()).then(|| jac.iter().sum::<f64>() / jac.len() as f64);
    Ok(TapMetrics {
        aj,
        delta_avg,
        oa: correct_vis as f64 / pairs as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tp(x: f32, y: f32, v: bool) -> TrackPoint {
        TrackPoint::new(x, y, v)
    }

    #[test]
    fn perfect_is_all_ones() {
        let gt = vec![tp(1.0, 2.0, true), tp(3.0, 4.0, false), tp(5.0, 5.0, true)];
        let q = TapQuery {
            query_frame: 0,
            pred: gt.clone(),
            gt,
        };
        let m = tap_metrics(&[q], 64, 64, &TapConfig::default()).unwrap();
        assert_eq!((m.aj, m.delta_avg, m.oa), (Some(1.0), Some(1.0), 1.0));
    }

    #[test]
    fn all_predicted_occluded() {
        // Two frames, both visible in truth; positions exact.
        let gt = vec![tp(1.0, 1.0, true), tp(2.0, 2.0, true)];
        let pred = vec![tp(1.0, 1.0, false), tp(2.0, 2.0, false)];
        let q = TapQuery {
            query_frame: 0,
            pred,
            gt,
        };
        let m = tap_metrics(&[q], 256, 256, &TapConfig::default()).unwrap();
        assert_eq!(m.oa, 0.0);
        assert_eq!(m.delta_avg, Some(1.0));
        assert_eq!(m.aj, Some(0.0));
    }

    #[test]
    fn empty_query_set_is_rejected() {
        assert!(tap_metrics(&[], 8, 8, &TapConfig::default()).is_err());
    }
}
