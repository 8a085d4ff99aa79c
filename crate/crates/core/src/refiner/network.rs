//! Graph construction for the refiner.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::RefinerConfig;
use crate::nn::{lit, Graph, ParamStore, Scalar, Tensor, Var};

/// One convolution in the parameter layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvSpec {
    pub name: String,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    /// Final layer of a residual head, initialized near zero.
    pub head: bool,
}

fn conv(name: &str, cin: usize, cout: usize, k: usize) -> ConvSpec {
    ConvSpec {
        name: name.to_string(),
        in_channels: cin,
        out_channels: cout,
        kernel: k,
        head: false,
    }
}

fn head(name: &str, cin: usize, cout: usize, k: usize) -> ConvSpec {
    ConvSpec {
        head: true,
        ..conv(name, cin, cout, k)
    }
}

/// Strides of the three residual stages; the stem supplies the rest of `P`.
const STAGE_STRIDES: [usize; 3] = [1, 2, 2];

/// Every convolution of the network, in a fixed order.
pub fn layout(cfg: &RefinerConfig) -> Vec<ConvSpec> {
    let e = cfg.encoder_channels;
    let mut v = vec![conv("fnet.stem", 3, e[0], 7)];
    for s in 0..3 {
        let (cin, cout) = (e[s], e[s + 1]);
        let p = format!("fnet.layer{}", s + 1);
        v.push(conv(&format!("{p}.conv1"), cin, cout, 3));
        v.push(conv(&format!("{p}.conv2"), cout, cout, 3));
        if cin != cout || STAGE_STRIDES[s] != 1 {
            v.push(conv(&format!("{p}.down"), cin, cout, 1));
        }
    }
    v.push(conv("fnet.proj", e[3], cfg.feature_dim, 1));
    v.push(conv("hinit", cfg.feature_dim, cfg.hidden_dim, 1));
    let [f1, f2] = cfg.flow_encoder_channels;
    let [c1, c2] = cfg.corr_encoder_channels;
    v.push(conv("enc.flow1", 3, f1, cfg.flow_kernel));
    v.push(conv("enc.flow2", f1, f2, 3));
    v.push(conv("enc.corr1", cfg.corr_channels(), c1, 1));
    v.push(conv("enc.corr2", c1, c2, 3));
    v.push(conv("enc.comb", f2 + c2, cfg.combined_channels(), 3));
    for gate in ["gru.z", "gru.r", "gru.q"] {
        v.push(conv(gate, cfg.gru_input(), cfg.hidden_dim, cfg.gru_kernel));
    }
    v.push(conv("dec_flow.1", cfg.hidden_dim, cfg.decoder_dim, 3));
    v.push(head("dec_flow.2", cfg.decoder_dim, 2, 3));
    v.push(conv("dec_mask.1", cfg.hidden_dim, cfg.decoder_dim, 3));
    v.push(head("dec_mask.2", cfg.decoder_dim, 1, 3));
    v.push(conv("up.1", cfg.hidden_dim, cfg.upsample_dim, 3));
    v.push(head("up.2", cfg.upsample_dim, 9 * cfg.patch * cfg.patch, 1));
    v
}

/// Weight and bias shapes keyed by parameter name.
pub fn param_shapes(cfg: &RefinerConfig) -> Vec<(String, [usize; 4])> {
    layout(cfg)
        .into_iter()
        .flat_map(|c| {
            [
                (format!("{}.weight", c.name), [c.out_channels, c.in_channels, c.kernel, c.kernel]),
                (format!("{}.bias", c.name), [1, c.out_channels, 1, 1]),
            ]
        })
        .collect()
}

/// He-normal weights, zero biases; residual heads scaled down by 10.
pub fn init_params<T: Scalar>(cfg: &RefinerConfig, seed: u64) -> ParamStore<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    for c in layout(cfg) {
        let fan_in = (c.in_channels * c.kernel * c.kernel) as f64;
        let std = (2.0 / fan_in).sqrt() * if c.head { 0.1 } else { 1.0 };
        let normal = Normal::new(0.0, std).expect("finite std");
        let shape = [c.out_channels, c.in_channels, c.kernel, c.kernel];
        let data = (0..shape.iter().product::<usize>())
            .map(|_| lit::<T>(normal.sample(&mut rng)))
            .collect();
        store.insert(format!("{}.weight", c.name), Tensor::from_vec(shape, data));
        store.insert(format!("{}.bias", c.name), Tensor::zeros([1, c.out_channels, 1, 1]));
    }
    store
}

/// Batched network inputs, already padded to a multiple of the patch size.
#[derive(Debug, Clone)]
pub struct RefinerInputs<T> {
    /// `[N, 3, Hp, Wp]`, values in `[0, 1]`.
    pub source: Tensor<T>,
    pub target: Tensor<T>,
    /// `[N, 2, Hc, Wc]` initial flow in pixels.
    pub flow0: Tensor<T>,
    /// `[N, 1, Hc, Wc]` initial visibility in `[0, 1]`.
    pub mask0: Tensor<T>,
    /// Output crop.
    pub height: usize,
    pub width: usize,
}

/// Correlation volumes, finest first.
#[derive(Debug, Clone)]
pub struct CorrelationPyramid {
    pub levels: Vec<Var>,
}

/// Iterate of the refinement loop.
#[derive(Debug, Clone, Copy)]
pub struct RefinerState {
    pub hidden: Var,
    /// Coarse flow in coarse-grid units.
    pub flow: Var,
    pub mask_logits: Var,
    pub iteration: usize,
}

/// Fine-resolution outputs of one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct RefinerOutputs {
    /// `[N, 2, H, W]` flow in pixels.
    pub flow: Var,
    /// `[N, 1, H, W]` visibility logits.
    pub mask_logits: Var,
}

fn relu_conv<T: Scalar>(g: &mut Graph<T>, x: Var, name: &str, stride: usize, pad: usize) -> Var {
    let y = g.conv(x, name, stride, pad);
    g.relu(y)
}

/// Frame encoder applied to one batch of frames.
pub fn encode_frame<T: Scalar>(g: &mut Graph<T>, cfg: &RefinerConfig, frames: Var) -> Var {
    let x = g.affine(frames, 2.0, -1.0);
    let mut x = relu_conv(g, x, "fnet.stem", cfg.stem_stride(), 3);
    for (s, &stride) in STAGE_STRIDES.iter().enumerate() {
        let p = format!("fnet.layer{}", s + 1);
        let y = relu_conv(g, x, &format!("{p}.conv1"), stride, 1);
        let y = relu_conv(g, y, &format!("{p}.conv2"), 1, 1);
        let skip = if g.has_param(&format!("{p}.down.weight")) {
            g.conv(x, &format!("{p}.down"), stride, 0)
        } else {
            x
        };
        let sum = g.add(skip, y);
        x = g.relu(sum);
    }
    g.conv(x, "fnet.proj", 1, 0)
}

/// Shared-weight features of both frames.
pub fn encode_frames<T: Scalar>(g: &mut Graph<T>, cfg: &RefinerConfig, source: Var, target: Var) -> (Var, Var) {
    (encode_frame(g, cfg, source), encode_frame(g, cfg, target))
}

/// All-pairs correlation scaled by `1/sqrt(D)`, pooled over target dims.
pub fn build_pyramid<T: Scalar>(g: &mut Graph<T>, cfg: &RefinerConfig, ys: Var, yt: Var) -> CorrelationPyramid {
    let d = g.shape(ys)[1] as f64;
    let mut levels = vec![g.correlation(ys, yt, 1.0 / d.sqrt())];
    for _ in 1..cfg.levels {
        let last = *levels.last().unwrap();
        levels.push(g.avg_pool2(last));
    }
    CorrelationPyramid { levels }
}

/// Correlation features `[N, L*(2r+1)^2, Hc, Wc]` around the current flow.
pub fn lookup<T: Scalar>(g: &mut Graph<T>, cfg: &RefinerConfig, pyramid: &CorrelationPyramid, flow: Var) -> Var {
    let parts: Vec<Var> = pyramid
        .levels
        .iter()
        .enumerate()
        .map(|(l, &c)| g.lookup(c, flow, cfg.radius, (1u64 << l) as f64))
        .collect();
    if parts.len() == 1 {
        parts[0]
    } else {
        g.concat(&parts)
    }
}

fn step<T: Scalar>(
    g: &mut Graph<T>,
    cfg: &RefinerConfig,
    pyramid: &CorrelationPyramid,
    context: Var,
    st: RefinerState,
) -> RefinerState {
    let corr = lookup(g, cfg, pyramid, st.flow);
    let fm = g.concat(&[st.flow, st.mask_logits]);
    let a = relu_conv(g, fm, "enc.flow1", 1, cfg.flow_kernel / 2);
    let a = relu_conv(g, a, "enc.flow2", 1, 1);
    let c = relu_conv(g, corr, "enc.corr1", 1, 0);
    let c = relu_conv(g, c, "enc.corr2", 1, 1);
    let ac = g.concat(&[a, c]);
    let m = relu_conv(g, ac, "enc.comb", 1, 1);
    let x = g.concat(&[m, st.flow, st.mask_logits]);

    let pad = cfg.gru_kernel / 2;
    let hx = g.concat(&[st.hidden, x, context]);
    let z = g.conv(hx, "gru.z", 1, pad);
    let z = g.sigmoid(z);
    let r = g.conv(hx, "gru.r", 1, pad);
    let r = g.sigmoid(r);
    let rh = g.mul(r, st.hidden);
    let rhx = g.concat(&[rh, x, context]);
    let q = g.conv(rhx, "gru.q", 1, pad);
    let q = g.tanh(q);
    let dq = g.sub(q, st.hidden);
    let zdq = g.mul(z, dq);
    let hidden = g.add(st.hidden, zdq);

    let df = relu_conv(g, hidden, "dec_flow.1", 1, 1);
    let df = g.conv(df, "dec_flow.2", 1, 1);
    let dm = relu_conv(g, hidden, "dec_mask.1", 1, 1);
    let dm = g.conv(dm, "dec_mask.2", 1, 1);
    RefinerState {
        hidden,
        flow: g.add(st.flow, df),
        mask_logits: g.add(st.mask_logits, dm),
        iteration: st.iteration + 1,
    }
}

/// Full forward pass. Requires `cfg.iterations >= 1`.
pub fn forward<T: Scalar>(g: &mut Graph<T>, cfg: &RefinerConfig, inputs: &RefinerInputs<T>) -> RefinerOutputs {
    assert!(cfg.iterations >= 1, "the network path needs at least one iteration");
    let p = cfg.patch as f64;
    let src = g.input(inputs.source.clone());
    let tgt = g.input(inputs.target.clone());
    let (ys, yt) = encode_frames(g, cfg, src, tgt);
    let pyramid = build_pyramid(g, cfg, ys, yt);
    let flow_in = g.input(inputs.flow0.clone());
    let mask_in = g.input(inputs.mask0.clone());
    let h0 = g.conv(ys, "hinit", 1, 0);
    let mut st = RefinerState {
        hidden: g.tanh(h0),
        flow: g.affine(flow_in, 1.0 / p, 0.0),
        // {0, 1} visibility to logits {-4, +4}
        mask_logits: g.affine(mask_in, 8.0, -4.0),
        iteration: 0,
    };
    while st.iteration < cfg.iterations {
        st = step(g, cfg, &pyramid, ys, st);
    }
    let u = relu_conv(g, st.hidden, "up.1", 1, 1);
    let weights = g.conv(u, "up.2", 1, 0);
    let flow = g.convex_upsample(st.flow, weights, cfg.patch, p);
    let mask = g.convex_upsample(st.mask_logits, weights, cfg.patch, 1.0);
    RefinerOutputs {
        flow: g.crop(flow, inputs.height, inputs.width),
        mask_logits: g.crop(mask, inputs.height, inputs.width),
    }
}
