mod common;

use dot_core::interp::CoarseEstimate;
use dot_core::nn::{Graph, ParamStore, Tensor};
use dot_core::refiner::{build_pyramid, Refiner, RefinerConfig};
use dot_core::Frame;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_tensor(shape: [usize; 4], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
}

#[test]
fn gradients_match_finite_differences() {
    let cfg = RefinerConfig::gradient_check();
    let report = common::gradient_check(&cfg, 3, 1e-6, 11);
    let worst = report.iter().map(|(_, e)| *e).fold(0.0, f64::max);
    assert!(worst < 1e-5, "{report:?}");
}

#[test]
fn pyramid_levels_are_target_means() {
    let cfg = RefinerConfig {
        levels: 3,
        ..RefinerConfig::gradient_check()
    };
    let empty = ParamStore::<f64>::new();
    let mut g = Graph::inference(&empty);
    let (h, w, d) = (4, 8, 5);
    let a = g.input(random_tensor([1, d, h, w], 1));
    let b = g.input(random_tensor([1, d, h, w], 2));
    let pyr = build_pyramid(&mut g, &cfg, a, b);
    let (fa, fb) = (g.value(a).clone(), g.value(b).clone());
    let dot = |p: usize, q: usize| (0..d).map(|c| fa.data[c * h * w + p] * fb.data[c * h * w + q]).sum::<f64>() / (d as f64).sqrt();
    let l0 = g.value(pyr.levels[0]);
    let l1 = g.value(pyr.levels[1]);
    let l2 = g.value(pyr.levels[2]);
    assert_eq!(l1.shape, [1, h * w, 2, 4]);
    assert_eq!(l2.shape, [1, h * w, 1, 2]);
    for p in 0..h * w {
        for q in 0..h * w {
            assert!((l0.data[p * h * w + q] - dot(p, q)).abs() < 1e-12);
        }
        for (i, j) in [(0, 0), (1, 3), (0, 2)] {
            let mean = (0..2)
                .flat_map(|di| (0..2).map(move |dj| (2 * i + di) * w + 2 * j + dj))
                .map(|q| dot(p, q))
                .sum::<f64>()
                / 4.0;
            assert!((l1.data[p * 8 + i * 4 + j] - mean).abs() < 1e-12);
        }
        let all: f64 = (0..h * w).filter(|q| q % w < 4).map(|q| dot(p, q)).sum::<f64>() / 16.0;
        assert!((l2.data[p * 2] - all).abs() < 1e-12);
    }
}

#[test]
fn lookup_reads_offsets_and_interpolates() {
    let empty = ParamStore::<f64>::new();
    let mut g = Graph::inference(&empty);
    let (h, w) = (3, 4);
    let corr = g.input(random_tensor([1, h * w, h, w], 3));
    let mut flow = Tensor::zeros([1, 2, h, w]);
    // cell (1, 1) moves by (0.25, 0.5)
    flow.data[w + 1] = 0.25;
    flow.data[h * w + w + 1] = 0.5;
    let flow = g.input(flow);
    let r = 1;
    let out = g.lookup(corr, flow, r, 1.0);
    let c = g.value(corr).clone();
    let o = g.value(out);
    let vol = |p: usize, y: isize, x: isize| {
        if y < 0 || x < 0 || y >= h as isize || x >= w as isize {
            0.0
        } else {
            c.data[p * h * w + y as usize * w + x as usize]
        }
    };
    // integer offsets around a still cell, zero outside
    let p = 0;
    for dy in -1..=1isize {
        for dx in -1..=1isize {
            let ch = ((dy + 1) * 3 + dx + 1) as usize;
            assert_eq!(o.data[ch * h * w + p], vol(p, dy, dx));
        }
    }
    // bilinear at (1.25 + dx, 1.5 + dy)
    let p = w + 1;
    for dy in -1..=1isize {
        for dx in -1..=1isize {
            let (x0, y0) = (1 + dx, 1 + dy);
            let want = 0.75 * 0.5 * vol(p, y0, x0)
                + 0.25 * 0.5 * vol(p, y0, x0 + 1)
                + 0.75 * 0.5 * vol(p, y0 + 1, x0)
                + 0.25 * 0.5 * vol(p, y0 + 1, x0 + 1);
            let ch = ((dy + 1) * 3 + dx + 1) as usize;
            assert!((o.data[ch * h * w + p] - want).abs() < 1e-12);
        }
    }
}

fn noise_frame(h: usize, w: usize, seed: u64) -> Frame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Frame::new(h, w, (0..h * w * 3).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap()
}

#[test]
fn odd_sizes_are_padded_and_cropped() {
    for patch in [4, 8] {
        let r = Refiner::new(RefinerConfig::gradient_check().with_patch(patch), 2).unwrap();
        let (a, b) = (noise_frame(19, 13, 1), noise_frame(19, 13, 2));
        let init = CoarseEstimate::zero(19, 13, patch);
        let (f, m) = r.refine(&a, &b, &init).unwrap();
        assert_eq!((f.height, f.width, m.height, m.width), (19, 13, 19, 13));
        assert!(f.data.iter().all(|v| v.is_finite()));
    }
}

#[test]
fn batched_and_single_refinement_agree() {
    let r = Refiner::new(RefinerConfig::gradient_check(), 4).unwrap();
    let frames: Vec<Frame> = (0..3).map(|i| noise_frame(16, 16, i)).collect();
    let mut init = CoarseEstimate::zero(16, 16, 4);
    init.flow.data.iter_mut().enumerate().for_each(|(i, v)| *v = (i % 5) as f32 - 2.0);
    let jobs: Vec<_> = (1..3)
        .map(|t| dot_core::refiner::RefineJob {
            source: &frames[0],
            target: &frames[t],
            init: &init,
        })
        .collect();
    let batched = r.refine_batch(&jobs).unwrap();
    for (job, (bf, bm)) in jobs.iter().zip(&batched) {
        let (f, m) = r.refine(job.source, job.target, job.init).unwrap();
        for (x, y) in f.data.iter().zip(&bf.data) {
            assert!((x - y).abs() < 1e-4);
        }
        for (x, y) in m.data.iter().zip(&bm.data) {
            assert!((x - y).abs() < 1e-5);
        }
    }
}

#[test]
fn checkpoint_round_trip_reproduces_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.safetensors");
    let r = Refiner::new(RefinerConfig::gradient_check(), 9).unwrap();
    r.save(&path).unwrap();
    let back = Refiner::load(&path, Some(r.config())).unwrap();
    let (a, b) = (noise_frame(16, 16, 5), noise_frame(16, 16, 6));
    let init = CoarseEstimate::zero(16, 16, 4);
    assert_eq!(r.refine(&a, &b, &init).unwrap(), back.refine(&a, &b, &init).unwrap());
}
