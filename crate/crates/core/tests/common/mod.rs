#![allow(dead_code)]

use dot_core::interp::{cell_center, coarse_dims};
use dot_core::{TrackPoint, TrackSet, TrackSource};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random two-frame track set; positions on a half-pixel lattice so that
/// squared distances are exact and ties happen. With `ties`, pairs of tracks
/// are placed symmetrically about a cell center or on top of each other.
pub fn random_tracks(seed: u64, h: usize, w: usize, patch: usize, n: usize, ties: bool) -> TrackSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tracks = Vec::with_capacity(n);
    let pos = |rng: &mut ChaCha8Rng| {
        (
            rng.random_range(0..2 * w) as f32 * 0.5,
            rng.random_range(0..2 * h) as f32 * 0.5,
        )
    };
    while tracks.len() < n {
        let (x, y) = pos(&mut rng);
        let src_vis = rng.random_bool(0.85);
        let tgt = TrackPoint::new(
            x + rng.random_range(-8.0..8.0f32),
            y + rng.random_range(-8.0..8.0f32),
            rng.random_bool(0.7),
        );
        tracks.push(vec![TrackPoint::new(x, y, src_vis), tgt]);
        if ties && tracks.len() < n && rng.random_bool(0.5) {
            let (hc, wc) = coarse_dims(h, w, patch);
            let (cx, cy) = cell_center(rng.random_range(0..hc), rng.random_range(0..wc), patch);
            let d = rng.random_range(1..4) as f32 * 0.5;
            let (a, b) = if rng.random_bool(0.5) {
                ((cx as f32 - d, cy as f32), (cx as f32 + d, cy as f32))
            } else {
                ((cx as f32, cy as f32 - d), (cx as f32, cy as f32 + d))
            };
            // a duplicate of the previous source position
            let dup = rng.random_bool(0.3);
            let first = if dup { (x, y) } else { a };
            tracks.last_mut().unwrap()[0] = TrackPoint::new(first.0, first.1, true);
            tracks.push(vec![
                TrackPoint::new(b.0, b.1, true),
                TrackPoint::new(b.0 + 1.0, b.1 - 2.0, rng.random_bool(0.5)),
            ]);
        }
    }
    tracks.truncate(n);
    TrackSet::new(2, tracks, TrackSource::Sampled).unwrap()
}

/// Scalar brute force: per cell, the lowest-index visible track at minimal
/// squared distance. Returns `(dx, dy, visible)` per cell, or `None` when no
/// track is visible at `s`.
pub fn brute_force(tracks: &TrackSet, s: usize, t: usize, h: usize, w: usize, patch: usize) -> Option<Vec<(f32, f32, f32)>> {
    let (hc, wc) = coarse_dims(h, w, patch);
    let mut out = Vec::with_capacity(hc * wc);
    for row in 0..hc {
        for col in 0..wc {
            let (qx, qy) = cell_center(row, col, patch);
            let mut best: Option<(f64, usize)> = None;
            for i in 0..tracks.num_tracks() {
                let p = tracks.point(i, s);
                if !p.visible {
                    continue;
                }
                let d = (p.x as f64 - qx).powi(2) + (p.y as f64 - qy).powi(2);
                if best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, i));
                }
            }
            let (_, i) = best?;
            let (a, b) = (tracks.point(i, s), tracks.point(i, t));
            out.push((b.x - a.x, b.y - a.y, if b.visible { 1.0 } else { 0.0 }));
        }
    }
    Some(out)
}

/// Cells where an estimate disagrees with the oracle.
pub fn mismatches(est: &dot_core::interp::CoarseEstimate, oracle: &[(f32, f32, f32)]) -> usize {
    oracle
        .iter()
        .enumerate()
        .filter(|&(c, &(dx, dy, v))| {
            est.flow.data[2 * c] != dx || est.flow.data[2 * c + 1] != dy || est.mask.data[c] != v
        })
        .count()
}

use dot_core::nn::{Graph, ParamStore};
use dot_core::refiner::{forward, init_params, make_inputs, RefineJob, RefinerConfig, RefinerInputs};
use dot_core::training::{draw_example, loss_seeds, Example, Supervision, TrainConfig, TrainingScene};

/// A 16x16 training pair from a synthetic scene.
pub fn small_example(cfg: &RefinerConfig, seed: u64) -> Example {
    let spec = dot_core::synthgen::SceneSpec::random(seed, dot_core::synthgen::ScenePreset::CvoLikeClean, 16, 16, Some(3));
    let ts = TrainingScene::new(dot_core::synthgen::Scene::generate(spec).unwrap()).unwrap();
    let tc = TrainConfig {
        num_input_tracks: 8,
        ..TrainConfig::default()
    };
    draw_example(&ts, 0, 2, &tc, cfg.patch, seed).unwrap()
}

pub fn loss_of(params: &ParamStore<f64>, cfg: &RefinerConfig, inputs: &RefinerInputs<f64>, sup: &Supervision) -> f64 {
    let mut g = Graph::inference(params);
    let out = forward(&mut g, cfg, inputs);
    let (r, _, _) = loss_seeds(g.value(out.flow), g.value(out.mask_logits), &[sup]).unwrap();
    r.total
}

/// Per-tensor relative error `|g_a - g_fd| / max(|g_a|, |g_fd|)` (Euclidean
/// norms over `samples` evenly spaced entries of each tensor) between
/// backprop and central differences with step `h`, in double precision.
pub fn gradient_check(cfg: &RefinerConfig, samples: usize, h: f64, seed: u64) -> Vec<(String, f64)> {
    let ex = small_example(cfg, seed);
    let job: RefineJob<'_> = ex.job();
    let inputs = make_inputs::<f64>(cfg, &[job]).unwrap();
    let mut params = init_params::<f64>(cfg, seed);
    let analytic = {
        let mut g = Graph::new(&params);
        let out = forward(&mut g, cfg, &inputs);
        let (_, df, dm) = loss_seeds(g.value(out.flow), g.value(out.mask_logits), &[&ex.supervision]).unwrap();
        g.backward(&[(out.flow, df), (out.mask_logits, dm)])
    };
    let mut report = Vec::new();
    for idx in 0..params.len() {
        let name = params.name(idx).to_string();
        let n = params.tensor(idx).data.len();
        let grad = analytic.get(idx).expect("every parameter gets a gradient").data.clone();
        let picks: Vec<usize> = if n <= samples {
            (0..n).collect()
        } else {
            (0..samples).map(|k| k * n / samples + (k * 7919) % (n / samples).max(1)).collect()
        };
        let (mut diff, mut na, mut nf) = (0.0f64, 0.0f64, 0.0f64);
        for &k in &picks {
            let orig = params.tensor(idx).data[k];
            params.tensor_mut(idx).data[k] = orig + h;
            let lp = loss_of(&params, cfg, &inputs, &ex.supervision);
            params.tensor_mut(idx).data[k] = orig - h;
            let lm = loss_of(&params, cfg, &inputs, &ex.supervision);
            params.tensor_mut(idx).data[k] = orig;
            let fd = (lp - lm) / (2.0 * h);
            diff += (grad[k] - fd).powi(2);
            na += grad[k].powi(2);
            nf += fd.powi(2);
        }
        let denom = na.sqrt().max(nf.sqrt());
        let rel = if denom == 0.0 { 0.0 } else { diff.sqrt() / denom };
        report.push((name, rel));
    }
    report
}

use dot_core::eval::TapQuery;
use dot_core::{FlowField, Resolution, VisibilityMask};

/// Random prediction, ground truth and binary visibility of size `h x w`.
pub fn random_case(seed: u64, h: usize, w: usize) -> (FlowField, FlowField, VisibilityMask) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = || (0..2 * h * w).map(|_| rng.random_range(-20.0..20.0f32)).collect::<Vec<_>>();
    let pred = FlowField::new(h, w, f(), Resolution::Fine).unwrap();
    let gt = FlowField::new(h, w, f(), Resolution::Fine).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
    let vis = (0..h * w).map(|_| if rng.random_bool(0.6) { 1.0 } else { 0.0 }).collect();
    (pred, gt, VisibilityMask::new(h, w, vis, true).unwrap())
}

pub fn q(query_frame: usize, gt: &[(f32, bool)], pred: &[(f32, bool)]) -> TapQuery {
    // positions move along x only so distances are exact
    let gt: Vec<TrackPoint> = gt.iter().enumerate().map(|(t, &(x, v))| TrackPoint::new(x, 10.0 * t as f32, v)).collect();
    let pred = pred
        .iter()
        .zip(&gt)
        .map(|(&(dx, v), g)| TrackPoint::new(g.x + dx, g.y, v))
        .collect();
    TapQuery { query_frame, pred, gt }
}

/// Straight enumeration over (query, frame, threshold).
pub fn enumerate(queries: &[TapQuery], thresholds: &[f64]) -> (f64, f64, f64) {
    let mut oa = (0, 0);
    let mut delta = Vec::new();
    let mut jac = Vec::new();
    for &th in thresholds {
        let (mut tp, mut fp, mut fn_, mut within, mut vis) = (0, 0, 0, 0, 0);
        for qu in queries {
            for (p, g) in qu.pred.iter().zip(&qu.gt) {
                let d = (((p.x - g.x) as f64).powi(2) + ((p.y - g.y) as f64).powi(2)).sqrt();
                let close = d < th;
                if g.visible {
                    vis += 1;
                    within += close as usize;
                }
                if p.visible && g.visible && close {
                    tp += 1;
                }
                if p.visible && (!g.visible || !close) {
                    fp += 1;
                }
                if g.visible && (!p.visible || !close) {
                    fn_ += 1;
                }
            }
        }
        delta.push(within as f64 / vis as f64);
        jac.push(tp as f64 / (tp + fp + fn_) as f64);
    }
    for qu in queries {
        for (p, g) in qu.pred.iter().zip(&qu.gt) {
            oa.0 += (p.visible == g.visible) as usize;
            oa.1 += 1;
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    (mean(&jac), mean(&delta), oa.0 as f64 / oa.1 as f64)
}

/// Three queries over four frames: mixed hits, visibility errors and an
/// all-occluded track.
pub fn tap_fixture() -> Vec<TapQuery> {
    vec![
        q(0, &[(10.0, true), (20.0, true), (30.0, true), (40.0, true)], &[(0.0, true), (1.5, true), (5.0, true), (20.0, false)]),
        q(0, &[(10.0, true), (20.0, false), (30.0, false), (40.0, true)], &[(0.5, true), (3.0, true), (0.0, false), (3.0, false)]),
        q(0, &[(10.0, false), (20.0, false), (30.0, false), (40.0, false)], &[(0.0, true); 4]),
    ]
}
