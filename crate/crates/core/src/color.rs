//! Optical-flow color-wheel visualization.
//!
//! Direction maps to hue along the usual 55-entry wheel (red, yellow, green,
//! cyan, blue, magenta), magnitude maps to saturation. Zero motion is white.

use crate::types::FlowField;

const RY: usize = 15;
const YG: usize = 6;
const GC: usize = 4;
const CB: usize = 11;
const BM: usize = 13;
const MR: usize = 6;
const NCOLS: usize = RY + YG + GC + CB + BM + MR;

fn color_wheel() -> [[f64; 3]; NCOLS] {
    let mut wheel = [[0.0; 3]; NCOLS];
    let mut k = 0;
    for i in 0..RY {
        wheel[k] = [1.0, i as f64 / RY as f64, 0.0];
        k += 1;
    }
    for i in 0..YG {
        wheel[k] = [1.0 - i as f64 / YG as f64, 1.0, 0.0];
        k += 1;
    }
    for i in 0..GC {
        wheel[k] = [0.0, 1.0, i as f64 / GC as f64];
        k += 1;
    }
    for i in 0..CB {
        wheel[k] = [0.0, 1.0 - i as f64 / CB as f64, 1.0];
        k += 1;
    }
    for i in 0..BM {
        wheel[k] = [i as f64 / BM as f64, 0.0, 1.0];
        k += 1;
    }
    for i in 0..MR {
        wheel[k] = [1.0, 0.0, 1.0 - i as f64 / MR as f64];
        k += 1;
    }
    wheel
}

/// Fully saturated wheel color for a direction angle `atan2(-dy, -dx) / pi`.
pub fn wheel_color(angle_over_pi: f64) -> [f64; 3] {
    let wheel = color_wheel();
    let fk = (angle_over_pi + 1.0) / 2.0 * (NCOLS - 1) as f64;
    let k0 = fk.floor() as usize;
    let k1 = if k0 + 1 == NCOLS { 0 } else { k0 + 1 };
    let f = fk - k0 as f64;
    let mut out = [0.0; 3];
    for c in 0..3 {
        out[c] = (1.0 - f) * wheel[k0][c] + f * wheel[k1][c];
    }
    out
}

fn encode(dx: f64, dy: f64, max_norm: f64) -> [u8; 3] {
    let (u, v) = (dx / max_norm, dy / max_norm);
    let rad = (u * u + v * v).sqrt();
    let base = wheel_color((-dy).atan2(-dx) / std::f64::consts::PI);
    let mut px = [0u8; 3];
    for c in 0..3 {
        let col = if rad <= 1.0 {
            1.0 - rad * (1.0 - base[c])
        } else {
            base[c] * 0.75
        };
        px[c] = (255.0 * col).round().clamp(0.0, 255.0) as u8;
    }
    px
}

/// Render a flow as an interleaved RGB8 image.
///
/// `max_norm = None` normalizes by the largest displacement in the field.
pub fn flow_to_color(flow: &FlowField, max_norm: Option<f32>) -> Vec<u8> {
    let norm = match max_norm {
        Some(n) => n as f64,
        None => flow
            .data
            .chunks_exact(2)
            .map(|d| (d[0] as f64).hypot(d[1] as f64))
            .fold(0.0, f64::max),
    };
    let norm = if norm > 0.0 { norm } else { 1.0 };
    flow.data
        .chunks_exact(2)
        .flat_map(|d| encode(d[0] as f64, d[1] as f64, norm))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Resolution;
    use proptest::prelude::*;

    #[test]
    fn zero_flow_is_white() {
        let img = flow_to_color(&FlowField::zeros(3, 4, Resolution::Fine), None);
        assert!(img.iter().all(|&c| c == 255));
    }

    #[test]
    fn unit_x_flow_is_uniform_red() {
        let img = flow_to_color(&FlowField::constant(2, 2, [1.0, 0.0]), Some(1.0));
        let first = [img[0], img[1], img[2]];
        assert!(img.chunks_exact(3).all(|p| p == first));
        assert_eq!(first, [255, 0, 0]);
    }

    #[test]
    fn star_pattern_gives_eight_hues_matching_angle_oracle() {
        let dirs: Vec<[f32; 2]> = (0..8)
            .map(|k| {
                let a = k as f64 * std::f64::consts::FRAC_PI_4;
                [a.cos() as f32, a.sin() as f32]
            })
            .collect();
        let mut flow = FlowField::zeros(1, 8, Resolution::Fine);
        for (x, d) in dirs.iter().enumerate() {
            flow.set(x, 0, *d);
        }
        let img = flow_to_color(&flow, Some(1.0));
        let mut seen = std::collections::HashSet::new();
        for (x, d) in dirs.iter().enumerate() {
            let px = [img[3 * x], img[3 * x + 1], img[3 * x + 2]];
            let rad = (d[0] as f64).hypot(d[1] as f64);
            let theta = (-(d[1] as f64)).atan2(-(d[0] as f64)) / std::f64::consts::PI;
            let oracle = wheel_color(theta).map(|c| (255.0 * (1.0 - rad * (1.0 - c))).round() as i32);
            for c in 0..3 {
                assert!((px[c] as i32 - oracle[c]).abs() <= 1, "dir {x}: {px:?} vs {oracle:?}");
            }
            seen.insert(px);
        }
        assert_eq!(seen.len(), 8);
    }

    proptest! {
        #[test]
        fn auto_norm_is_scale_invariant(
            vals in proptest::collection::vec(-50.0f32..50.0, 2..40),
            exp in -4i32..5,
        ) {
            let n = vals.len() / 2;
            let flow = FlowField::new(1, n, vals[..2 * n].to_vec(), Resolution::Fine).unwrap();
            let scaled = flow.scaled(2f32.powi(exp));
            prop_assert_eq!(flow_to_color(&flow, None), flow_to_color(&scaled, None));
        }
    }
}
