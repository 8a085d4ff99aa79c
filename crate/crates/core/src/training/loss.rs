use serde::{Deserialize, Serialize};

use crate::error::{DotError, Result};
use crate::types::{FlowField, VisibilityMask};

/// Lower and upper clip applied to soft visibility inside the BCE.
pub const BCE_CLIP: f64 = 1e-3;

/// Per-step training objective.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossReport {
    /// Mean absolute flow error per component, pixels.
    pub flow_l1: f64,
    /// Mean binary cross entropy of the soft mask, nats.
    pub mask_bce: f64,
    /// `flow_l1 + mask_bce`.
    pub total: f64,
}

impl LossReport {
    pub fn new(flow_l1: f64, mask_bce: f64) -> Self {
        LossReport {
            flow_l1,
            mask_bce,
            total: flow_l1 + mask_bce,
        }
    }

    /// Componentwise mean of several reports.
    pub fn mean(reports: &[LossReport]) -> LossReport {
        let n = reports.len().max(1) as f64;
        LossReport::new(
            reports.iter().map(|r| r.flow_l1).sum::<f64>() / n,
            reports.iter().map(|r| r.mask_bce).sum::<f64>() / n,
        )
    }
}

/// One sparse correspondence: source position, true displacement and
/// visibility at the target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparsePoint {
    pub x: f32,
    pub y: f32,
    pub dx: f32,
    pub dy: f32,
    pub visible: bool,
}

/// Ground truth for one frame pair.
#[derive(Debug, Clone, PartialEq)]
pub enum Supervision {
    Dense { flow: FlowField, visibility: VisibilityMask },
    Sparse(Vec<SparsePoint>),
}

/// The four clamped bilinear taps `(index, weight)` used by
/// [`FlowField::sample_bilinear`].
pub(crate) fn bilinear_taps(height: usize, width: usize, x: f32, y: f32) -> [(usize, f64); 4] {
    let xc = x.clamp(0.0, (width - 1) as f32);
    let yc = y.clamp(0.0, (height - 1) as f32);
    let x0 = (xc.floor() as usize).min(width - 1);
    let y0 = (yc.floor() as usize).min(height - 1);
    let x1 = (x0 + 1).min(width - 1);
    let y1 = (y0 + 1).min(height - 1);
    let fx = (xc - x0 as f32) as f64;
    let fy = (yc - y0 as f32) as f64;
    [
        (y0 * width + x0, (1.0 - fy) * (1.0 - fx)),
        (y0 * width + x1, (1.0 - fy) * fx),
        (y1 * width + x0, fy * (1.0 - fx)),
        (y1 * width + x1, fy * fx),
    ]
}

/// BCE of a clipped probability and its derivative with respect to `m`.
fn bce(m: f64, y: bool) -> (f64, f64) {
    let clipped = m.clamp(BCE_CLIP, 1.0 - BCE_CLIP);
    let inside = m > BCE_CLIP && m < 1.0 - BCE_CLIP;
    let (loss, d) = if y {
        (-clipped.ln(), -1.0 / clipped)
    } else {
        (-(1.0 - clipped).ln(), 1.0 / (1.0 - clipped))
    };
    (loss, if inside { d } else { 0.0 })
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Predictions as planar buffers: flow `[2][H*W]`, soft mask `[H*W]`.
pub(crate) struct PlanarPrediction<'a> {
    pub height: usize,
    pub width: usize,
    pub flow: &'a [f64],
    pub mask: &'a [f64],
}

/// Loss and its gradients with respect to the planar flow and soft mask.
pub(crate) fn loss_and_grad(pred: &PlanarPrediction<'_>, sup: &Supervision) -> Result<(LossReport, Vec<f64>, Vec<f64>)> {
    let (h, w) = (pred.height, pred.width);
    let hw = h * w;
    let mut dflow = vec![0.0; 2 * hw];
    let mut dmask = vec![0.0; hw];
    match sup {
        Supervision::Dense { flow, visibility } => {
            if (flow.height, flow.width) != (h, w) || (visibility.height, visibility.width) != (h, w) {
                return Err(DotError::Shape(format!(
                    "supervision is {}x{}, prediction is {h}x{w}",
                    flow.height, flow.width
                )));
            }
            if hw == 0 {
                return Err(DotError::NoSupervision);
            }
            let (mut l1, mut bsum) = (0.0, 0.0);
            for k in 0..hw {
                for c in 0..2 {
                    let e = pred.flow[c * hw + k] - flow.data[2 * k + c] as f64;
                    l1 += e.abs();
                    dflow[c * hw + k] = sign(e) / (2 * hw) as f64;
                }
                let (b, db) = bce(pred.mask[k], visibility.data[k] >= 0.5);
                bsum += b;
                dmask[k] = db / hw as f64;
            }
            Ok((LossReport::new(l1 / (2 * hw) as f64, bsum / hw as f64), dflow, dmask))
        }
        Supervision::Sparse(points) => {
            if points.is_empty() {
                return Err(DotError::NoSupervision);
            }
            let n = points.len() as f64;
            let (mut l1, mut bsum) = (0.0, 0.0);
            for p in points {
                let taps = bilinear_taps(h, w, p.x, p.y);
                for (c, truth) in [p.dx, p.dy].into_iter().enumerate() {
                    let v: f64 = taps.iter().map(|&(i, wt)| wt * pred.flow[c * hw + i]).sum();
                    let e = v - truth as f64;
                    l1 += e.abs();
                    for &(i, wt) in &taps {
                        dflow[c * hw + i] += sign(e) * wt / (2.0 * n);
                    }
                }
                let m: f64 = taps.iter().map(|&(i, wt)| wt * pred.mask[i]).sum();
                let (b, db) = bce(m, p.visible);
                bsum += b;
                for &(i, wt) in &taps {
                    dmask[i] += db * wt / n;
                }
            }
            Ok((LossReport::new(l1 / (2.0 * n), bsum / n), dflow, dmask))
        }
    }
}

/// Training objective of a predicted flow and soft mask.
///
/// `flow_l1` averages absolute errors over supervised locations and both
/// components; `mask_bce` averages the BCE of the soft mask clipped to
/// `[1e-3, 1 - 1e-3]`. Sparse points read the prediction bilinearly.
pub fn compute_loss(flow: &FlowField, mask: &VisibilityMask, sup: &Supervision) -> Result<LossReport> {
    if (flow.height, flow.width) != (mask.height, mask.width) {
        return Err(DotError::Shape("flow and mask sizes differ".into()));
    }
    let hw = flow.height * flow.width;
    let mut planar = vec![0.0; 2 * hw];
    for k in 0..hw {
        planar[k] = flow.data[2 * k] as f64;
        planar[hw + k] = flow.data[2 * k + 1] as f64;
    }
    let soft: Vec<f64> = mask.data.iter().map(|&v| v as f64).collect();
    let pred = PlanarPrediction {
        height: flow.height,
        width: flow.width,
        flow: &planar,
        mask: &soft,
    };
    loss_and_grad(&pred, sup).map(|(r, _, _)| r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Resolution;

    #[test]
    fn perfect_prediction_floor() {
        let gt = FlowField::constant(4, 5, [1.0, -2.0]);
        let mut vis = VisibilityMask::filled(4, 5, true);
        vis.data[3] = 0.0;
        let r = compute_loss(
            &gt,
            &vis,
            &Supervision::Dense {
                flow: gt.clone(),
                visibility: vis.clone(),
            },
        )
        .unwrap();
        assert_eq!(r.flow_l1, 0.0);
        assert!(r.mask_bce < 0.02);
        assert!((r.mask_bce + (1.0f64 - 1e-3).ln()).abs() < 1e-12);
    }

    #[test]
    fn constant_offset_gives_mean_of_components() {
        let gt = FlowField::zeros(3, 3, Resolution::Fine);
        let pred = FlowField::constant(3, 3, [3.0, 4.0]);
        let vis = VisibilityMask::filled(3, 3, true);
        let r = compute_loss(
            &pred,
            &vis,
            &Supervision::Dense {
                flow: gt,
                visibility: vis.clone(),
            },
        )
        .unwrap();
        assert_eq!(r.flow_l1, 3.5);
        assert_eq!(r.total, r.flow_l1 + r.mask_bce);
    }

    #[test]
    fn empty_sparse_set_is_an_error() {
        let f = FlowField::zeros(2, 2, Resolution::Fine);
        let m = VisibilityMask::filled(2, 2, true);
        assert!(matches!(
            compute_loss(&f, &m, &Supervision::Sparse(vec![])),
            Err(DotError::NoSupervision)
        ));
    }
}
