//! Flow, occlusion and point-tracking metrics, forward-backward occlusion
//! estimation, report aggregation and a wall-clock timing harness.

mod report;
mod tap;
mod timing;

pub use report::{aggregate, parallel_map, summary_csv, EvalRecord, EvalReport};
pub use tap::{tap_metrics, TapConfig, TapMetrics, TapQuery};
pub use timing::{time_method, EnvFingerprint, TimingReport};

use crate::error::{DotError, Result};
use crate::types::{FlowField, MetricReport, VisibilityMask, DEFAULT_TAU};

/// End-point error split by ground-truth visibility.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpeSplit {
    pub all: Option<f64>,
    pub vis: Option<f64>,
    pub occ: Option<f64>,
    pub n_vis: usize,
    pub n_occ: usize,
}

fn check_dims(a: (usize, usize), b: (usize, usize), what: &str) -> Result<()> {
    if a != b {
        return Err(DotError::Shape(format!(
            "{what}: {}x{} vs {}x{}",
            a.0, a.1, b.0, b.1
        )));
    }
    Ok(())
}

/// Mean Euclidean distance between `pred` and `gt`, over all pixels and over
/// the pixels `gt_vis` marks visible or occluded.
pub fn epe(pred: &FlowField, gt: &FlowField, gt_vis: &VisibilityMask) -> Result<EpeSplit> {
    check_dims((pred.height, pred.width), (gt.height, gt.width), "flow shapes differ")?;
    check_dims((gt.height, gt.width), (gt_vis.height, gt_vis.width), "mask shape differs")?;
    let (mut s_vis, mut s_occ) = (0.0f64, 0.0f64);
    let (mut n_vis, mut n_occ) = (0usize, 0usize);
    for (k, &v) in gt_vis.data.iter().enumerate() {
        let dx = (pred.data[2 * k] - gt.data[2 * k]) as f64;
        let dy = (pred.data[2 * k + 1] - gt.data[2 * k + 1]) as f64;
        let e = (dx * dx + dy * dy).sqrt();
        if v >= 0.5 {
            s_vis += e;
            n_vis += 1;
        } else {
            s_occ += e;
            n_occ += 1;
        }
    }
    let mean = |s: f64, n: usize| (n > 0).then(|| s / n as f64);
    Ok(EpeSplit {
        all: mean(s_vis + s_occ, n_vis + n_occ),
        vis: mean(s_vis, n_vis),
        occ: mean(s_occ, n_occ),
        n_vis,
        n_occ,
    })
}

fn require_binary(m: &VisibilityMask, which: &str) -> Result<()> {
    if let Some(v) = m.data.iter().find(|&&v| v != 0.0 && v != 1.0) {
        return Err(DotError::Contract(format!("{which} mask is not binary (value {v})")));
    }
    Ok(())
}

/// IoU of the occluded (zero) regions of two binary masks; 1 when neither
/// has any occlusion.
pub fn occlusion_iou(pred: &VisibilityMask, gt: &VisibilityMask) -> Result<f64> {
    check_dims((pred.height, pred.width), (gt.height, gt.width), "mask shapes differ")?;
    require_binary(pred, "predicted")?;
    require_binary(gt, "ground-truth")?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (&a, &b) in pred.data.iter().zip(&gt.data) {
        let (oa, ob) = (a == 0.0, b == 0.0);
        inter += (oa && ob) as usize;
        union += (oa || ob) as usize;
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

/// Parameters of the forward-backward check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FbParams {
    pub alpha: f32,
    pub beta: f32,
}

impl Default for FbParams {
    fn default() -> Self {
        FbParams { alpha: 0.01, beta: 0.5 }
    }
}

/// Occlusion from forward-backward consistency.
///
/// A pixel is visible when its forward target lies inside the frame and the
/// backward flow sampled there (bilinearly) brings it back within
/// `alpha * (|f|^2 + |b|^2) + beta`.
pub fn fb_consistency_mask(fwd: &FlowField, bwd: &FlowField, params: FbParams) -> Result<VisibilityMask> {
    check_dims((fwd.height, fwd.width), (bwd.height, bwd.width), "flow shapes differ")?;
    let (h, w) = (fwd.height, fwd.width);
    let mut data = vec![0.0f32; h * w];
    for y in 0..h {
        for x in 0..w {
            let f = fwd.get(x, y);
            let (tx, ty) = (x as f32 + f[0], y as f32 + f[1]);
            let inside = tx >= -0.5 && tx < w as f32 - 0.5 && ty >= -0.5 && ty < h as f32 - 0.5;
            if !inside {
                continue;
            }
            let b = bwd.sample_bilinear(tx, ty);
            let (sx, sy) = (f[0] + b[0], f[1] + b[1]);
            let lhs = sx * sx + sy * sy;
            let rhs = params.alpha * (f[0] * f[0] + f[1] * f[1] + b[0] * b[0] + b[1] * b[1]) + params.beta;
            if lhs <= rhs {
                data[y * w + x] = 1.0;
            }
        }
    }
    Ok(VisibilityMask {
        height: h,
        width: w,
        data,
        binary: true,
    })
}

/// EPE splits plus occlusion IoU of the thresholded predicted mask.
pub fn flow_metrics(
    pred_flow: &FlowField,
    pred_mask: &VisibilityMask,
    gt_flow: &FlowField,
    gt_vis: &VisibilityMask,
) -> Result<MetricReport> {
    let e = epe(pred_flow, gt_flow, gt_vis)?;
    let pm = if pred_mask.binary {
        pred_mask.clone()
    } else {
        pred_mask.binarize(DEFAULT_TAU)
    };
    Ok(MetricReport {
        epe_all: e.all,
        epe_vis: e.vis,
        epe_occ: e.occ,
        iou_occ: Some(occlusion_iou(&pm, gt_vis)?),
        ..MetricReport::default()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Resolution;

    fn mask(h: usize, w: usize, data: Vec<f32>) -> VisibilityMask {
        VisibilityMask {
            height: h,
            width: w,
            data,
            binary: true,
        }
    }

    #[test]
    fn constant_offset_gives_five() {
        let gt = FlowField::zeros(4, 4, Resolution::Fine);
        let pred = FlowField::constant(4, 4, [3.0, 4.0]);
        let mut v = vec![1.0; 16];
        v[5] = 0.0;
        let e = epe(&pred, &gt, &mask(4, 4, v)).unwrap();
        assert_eq!((e.all, e.vis, e.occ), (Some(5.0), Some(5.0), Some(5.0)));
    }

    #[test]
    fn empty_split_is_absent() {
        let gt = FlowField::zeros(2, 2, Resolution::Fine);
        let e = epe(&gt, &gt, &VisibilityMask::filled(2, 2, true)).unwrap();
        assert_eq!(e.occ, None);
        assert_eq!(e.vis, Some(0.0));
    }

    #[test]
    fn iou_cases() {
        let all = VisibilityMask::filled(3, 3, true);
        assert_eq!(occlusion_iou(&all, &all).unwrap(), 1.0);
        let mut a = vec![1.0; 9];
        let mut b = vec![1.0; 9];
        a[0] = 0.0;
        b[8] = 0.0;
        assert_eq!(occlusion_iou(&mask(3, 3, a), &mask(3, 3, b)).unwrap(), 0.0);
        let soft = VisibilityMask {
            binary: false,
            ..mask(3, 3, vec![0.3; 9])
        };
        assert!(matches!(occlusion_iou(&soft, &all), Err(DotError::Contract(_))));
    }

    #[test]
    fn consistent_flows_are_visible_and_exits_are_occluded() {
        let f = FlowField::constant(6, 6, [2.0, 0.0]);
        let b = FlowField::constant(6, 6, [-2.0, 0.0]);
        let m = fb_consistency_mask(&f, &b, FbParams::default()).unwrap();
        for y in 0..6 {
            for x in 0..6 {
                assert_eq!(m.get(x, y), if x < 4 { 1.0 } else { 0.0 }, "({x},{y})");
            }
        }
    }
}
