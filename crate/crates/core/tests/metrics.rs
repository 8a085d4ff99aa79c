mod common;

use common::{enumerate, q, random_case, tap_fixture};
use dot_core::eval::{epe, fb_consistency_mask, occlusion_iou, tap_metrics, FbParams, TapConfig, TapQuery};
use dot_core::synthgen::{Scene, ScenePreset, SceneSpec};
use dot_core::training::{compute_loss, SparsePoint, Supervision};
use dot_core::{FlowField, Resolution, VisibilityMask};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn mask(h: usize, w: usize, occluded: &[(usize, usize)]) -> VisibilityMask {
    let mut m = VisibilityMask::filled(h, w, true);
    for &(x, y) in occluded {
        m.data[y * w + x] = 0.0;
    }
    m
}

#[test]
fn epe_matches_double_loop() {
    for seed in 0..20 {
        let (pred, gt, vis) = random_case(seed, 8, 8);
        let (mut sums, mut counts) = ([0.0f64; 3], [0usize; 3]);
        for y in 0..8 {
            for x in 0..8 {
                let (p, g) = (pred.get(x, y), gt.get(x, y));
                let e = ((p[0] as f64 - g[0] as f64).powi(2) + (p[1] as f64 - g[1] as f64).powi(2)).sqrt();
                let split = if vis.get(x, y) == 1.0 { 1 } else { 2 };
                for k in [0, split] {
                    sums[k] += e;
                    counts[k] += 1;
                }
            }
        }
        let r = epe(&pred, &gt, &vis).unwrap();
        for (k, v) in [r.all, r.vis, r.occ].into_iter().enumerate() {
            assert!((v.unwrap() - sums[k] / counts[k] as f64).abs() < 1e-6);
        }
    }
}

#[test]
fn iou_of_half_overlapping_squares() {
    // occluded 2x2 squares at columns 0-1 and 1-2 of rows 0-1: 2 shared of 6
    let a = mask(4, 4, &[(0, 0), (1, 0), (0, 1), (1, 1)]);
    let b = mask(4, 4, &[(1, 0), (2, 0), (1, 1), (2, 1)]);
    assert!((occlusion_iou(&a, &b).unwrap() - 2.0 / 6.0).abs() < 1e-12);
}

#[test]
fn tap_fixture_matches_enumeration() {
    let queries = tap_fixture();
    let cfg = TapConfig::default();
    let m = tap_metrics(&queries, 256, 256, &cfg).unwrap();
    let (aj, delta, oa) = enumerate(&queries, &cfg.thresholds);
    assert!((m.aj.unwrap() - aj).abs() < 1e-6);
    assert!((m.delta_avg.unwrap() - delta).abs() < 1e-6);
    assert!((m.oa - oa).abs() < 1e-6);
    // hand-counted
    assert!((m.oa - 5.0 / 12.0).abs() < 1e-12);
    assert!((m.delta_avg.unwrap() - 19.0 / 30.0).abs() < 1e-12);
    let hand_aj = (2.0 / 13.0 + 0.25 + 0.25 + 4.0 / 11.0 + 4.0 / 11.0) / 5.0;
    assert!((m.aj.unwrap() - hand_aj).abs() < 1e-12);
}

#[test]
fn tap_rescales_to_the_normalized_frame() {
    // 2 px off in a 128-wide frame is 4 px at 256: inside 8 and 16 only
    let qs = vec![q(0, &[(10.0, true)], &[(2.0, true)])];
    let m = tap_metrics(&qs, 128, 128, &TapConfig::default()).unwrap();
    assert!((m.delta_avg.unwrap() - 0.4).abs() < 1e-12);
}

#[test]
fn loss_scalar_oracle() {
    // 1x2 image: errors (1, -2) and (0.5, 0), masks 0.9 vs visible, 0.2 vs occluded
    let pred = FlowField::new(1, 2, vec![1.0, -2.0, 0.5, 0.0], Resolution::Fine).unwrap();
    let gt = FlowField::zeros(1, 2, Resolution::Fine);
    let m = VisibilityMask::new(1, 2, vec![0.9, 0.2], false).unwrap();
    let vis = VisibilityMask::new(1, 2, vec![1.0, 0.0], true).unwrap();
    let r = compute_loss(&pred, &m, &Supervision::Dense { flow: gt, visibility: vis }).unwrap();
    assert!((r.flow_l1 - 3.5 / 4.0).abs() < 1e-6);
    let bce = (-(0.9f64.ln()) - (0.8f64.ln())) / 2.0;
    assert!((r.mask_bce - bce).abs() < 1e-6);
    assert!((r.total - r.flow_l1 - r.mask_bce).abs() < 1e-12);
}

#[test]
fn sparse_points_on_every_pixel_equal_dense() {
    let (pred, gt, vis) = random_case(5, 6, 7);
    let soft = VisibilityMask::new(6, 7, (0..42).map(|i| (i as f32 + 0.5) / 43.0).collect(), false).unwrap();
    let points = (0..6)
        .flat_map(|y| (0..7).map(move |x| (x, y)))
        .map(|(x, y)| {
            let d = gt.get(x, y);
            SparsePoint {
                x: x as f32,
                y: y as f32,
                dx: d[0],
                dy: d[1],
                visible: vis.get(x, y) == 1.0,
            }
        })
        .collect();
    let dense = compute_loss(&pred, &soft, &Supervision::Dense { flow: gt, visibility: vis }).unwrap();
    let sparse = compute_loss(&pred, &soft, &Supervision::Sparse(points)).unwrap();
    assert!((dense.flow_l1 - sparse.flow_l1).abs() < 1e-9);
    assert!((dense.mask_bce - sparse.mask_bce).abs() < 1e-9);
}

#[test]
fn fb_check_recovers_scene_occlusion() {
    let mut total = 0.0;
    for seed in 0..5 {
        let scene = Scene::generate(SceneSpec::random(seed, ScenePreset::CvoLikeClean, 48, 48, Some(6))).unwrap();
        let (fwd, vis) = scene.ground_truth_pair(0, 5).unwrap();
        let bwd = scene.ground_truth_flow(5, 0).unwrap();
        let est = fb_consistency_mask(&fwd, &bwd, FbParams::default()).unwrap();
        total += occlusion_iou(&est, &vis).unwrap();
    }
    assert!(total / 5.0 >= 0.8, "mean IoU {}", total / 5.0);
}

proptest! {
    #[test]
    fn epe_splits_recombine(seed in any::<u64>(), h in 1usize..10, w in 1usize..10) {
        let (pred, gt, vis) = random_case(seed, h, w);
        let r = epe(&pred, &gt, &vis).unwrap();
        let parts = r.n_vis as f64 * r.vis.unwrap_or(0.0) + r.n_occ as f64 * r.occ.unwrap_or(0.0);
        let all = r.all.unwrap();
        prop_assert!((parts / (r.n_vis + r.n_occ) as f64 - all).abs() <= 1e-12 * all.max(1.0));
    }

    #[test]
    fn iou_is_symmetric(a in prop::collection::vec(any::<bool>(), 20), b in prop::collection::vec(any::<bool>(), 20)) {
        let to = |v: &[bool]| VisibilityMask::new(4, 5, v.iter().map(|&x| x as u8 as f32).collect(), true).unwrap();
        prop_assert_eq!(occlusion_iou(&to(&a), &to(&b)).unwrap(), occlusion_iou(&to(&b), &to(&a)).unwrap());
    }

    #[test]
    fn fb_is_clean_for_exact_inverse(dx in -8.0f32..8.0, dy in -8.0f32..8.0) {
        let (h, w) = (12usize, 12usize);
        let f = FlowField::constant(h, w, [dx, dy]);
        let m = fb_consistency_mask(&f, &f.scaled(-1.0), FbParams::default()).unwrap();
        for y in 0..h {
            for x in 0..w {
                let (tx, ty) = (x as f32 + dx, y as f32 + dy);
                let inside = tx >= -0.5 && tx < w as f32 - 0.5 && ty >= -0.5 && ty < h as f32 - 0.5;
                prop_assert_eq!(m.get(x, y) == 1.0, inside);
            }
        }
    }

    #[test]
    fn oa_ignores_positions_and_delta_ignores_visibility(
        seed in any::<u64>(),
        shift in -30.0f32..30.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mk = |rng: &mut ChaCha8Rng| -> Vec<(f32, bool)> { (0..5).map(|_| (rng.random_range(-9.0..9.0f32), rng.random_bool(0.6))).collect() };
        let queries: Vec<TapQuery> = (0..4)
            .map(|_| {
                let g: Vec<(f32, bool)> = mk(&mut rng).into_iter().map(|(x, v)| (x + 50.0, v)).collect();
                let p = mk(&mut rng);
                q(0, &g, &p)
            })
            .collect();
        let base = tap_metrics(&queries, 64, 64, &TapConfig::default()).unwrap();
        let moved: Vec<TapQuery> = queries.iter().cloned().map(|mut qu| {
            for p in &mut qu.pred { p.x += shift; }
            qu
        }).collect();
        prop_assert_eq!(tap_metrics(&moved, 64, 64, &TapConfig::default()).unwrap().oa, base.oa);
        let flipped: Vec<TapQuery> = queries.iter().cloned().map(|mut qu| {
            for p in &mut qu.pred { p.visible = !p.visible; }
            qu
        }).collect();
        prop_assert_eq!(tap_metrics(&flipped, 64, 64, &TapConfig::default()).unwrap().delta_avg, base.delta_avg);
        if let Some(aj) = base.aj {
            prop_assert!((0.0..=1.0).contains(&aj));
        }
    }
}
