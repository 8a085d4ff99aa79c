use super::Refiner;
use crate::error::{DotError, Result};
use crate::interp::{cell_center, coarse_dims, CoarseEstimate};
use crate::types::{FlowField, Resolution, Video, VisibilityMask};

/// Compose consecutive flows: `F(x) = F1(x) + F2(x + F1(x)) + ...`.
///
/// Later flows are read with clamped bilinear sampling. An empty chain is
/// the identity (zero flow).
pub fn chain_flows(height: usize, width: usize, flows: &[FlowField]) -> Result<FlowField> {
    let mut total = FlowField::zeros(height, width, Resolution::Fine);
    for (k, f) in flows.iter().enumerate() {
        if (f.height, f.width) != (height, width) {
            return Err(DotError::Shape(format!(
                "flow {k} is {}x{}, expected {height}x{width}",
                f.height, f.width
            )));
        }
        for y in 0..height {
            for x in 0..width {
                let d = total.get(x, y);
                let step = f.sample_bilinear(x as f32 + d[0], y as f32 + d[1]);
                total.set(x, y, [d[0] + step[0], d[1] + step[1]]);
            }
        }
    }
    Ok(total)
}

/// Bilinear sample of a fine flow at coarse cell centers.
pub fn downsample_to_coarse(flow: &FlowField, patch: usize) -> FlowField {
    let (hc, wc) = coarse_dims(flow.height, flow.width, patch);
    let mut out = FlowField::zeros(hc, wc, Resolution::Coarse { patch });
    for i in 0..hc {
        for j in 0..wc {
            let (x, y) = cell_center(i, j, patch);
            out.set(j, i, flow.sample_bilinear(x as f32, y as f32));
        }
    }
    out
}

/// Estimate `s -> t` by stepping one frame at a time, initializing each pair
/// `(s, u)` with the result for `(s, u - 1)` and an all-visible mask.
pub fn warm_start(refiner: &Refiner, video: &Video, s: usize, t: usize) -> Result<(FlowField, VisibilityMask)> {
    let (h, w) = (video.height(), video.width());
    let src = video.frame(s)?;
    video.frame(t)?;
    let p = refiner.config().patch;
    let mut result = (FlowField::zeros(h, w, Resolution::Fine), VisibilityMask::filled(h, w, true));
    let mut u = s;
    while u != t {
        u = if t > u { u + 1 } else { u - 1 };
        let init = CoarseEstimate {
            flow: downsample_to_coarse(&result.0, p),
            mask: {
                let (hc, wc) = coarse_dims(h, w, p);
                VisibilityMask::filled(hc, wc, true)
            },
            patch: p,
        };
        result = refiner.refine(src, video.frame(u)?, &init)?;
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_chain_is_identity() {
        let f = chain_flows(3, 4, &[]).unwrap();
        assert!(f.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_flows_add() {
        let a = FlowField::constant(8, 8, [1.0, 0.0]);
        let b = FlowField::constant(8, 8, [0.0, 2.0]);
        let f = chain_flows(8, 8, &[a, b]).unwrap();
        assert!(f.data.chunks(2).all(|d| d == [1.0, 2.0]));
    }

    #[test]
    fn chain_rejects_mismatched_sizes() {
        let a = FlowField::constant(8, 8, [1.0, 0.0]);
        assert!(chain_flows(8, 9, &[a]).is_err());
    }

    #[test]
    fn constant_flow_downsamples_exactly() {
        let f = FlowField::constant(13, 10, [0.5, -2.0]);
        let c = downsample_to_coarse(&f, 4);
        assert_eq!((c.height, c.width), (4, 3));
        assert!(c.data.chunks(2).all(|d| d == [0.5, -2.0]));
    }
}
