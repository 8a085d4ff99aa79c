use std::collections::HashMap;

use super::conv::{conv2d, conv2d_backward};
use super::{gemm, ParamStore, Scalar, Tensor};

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op<T> {
    Input,
    Param(usize),
    Conv {
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        pad: usize,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Affine {
        x: Var,
        a: T,
    },
    Concat(Vec<Var>),
    Slice {
        x: Var,
        start: usize,
    },
    Correlation {
        a: Var,
        b: Var,
        scale: T,
    },
    AvgPool2(Var),
    Lookup {
        corr: Var,
        flow: Var,
        radius: usize,
        div: T,
    },
    ConvexUp {
        x: Var,
        logits: Var,
        factor: usize,
        mult: T,
    },
    Crop(Var),
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Define-by-run tape over a borrowed parameter store.
pub struct Graph<'p, T> {
    params: &'p ParamStore<T>,
    nodes: Vec<Node<T>>,
    param_vars: HashMap<usize, Var>,
    track: bool,
}

/// Parameter gradients indexed like the store they came from.
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, idx: usize) -> Option<&Tensor<T>> {
        self.grads.get(idx).and_then(Option::as_ref)
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    /// Largest absolute gradient entry, for divergence diagnostics.
    pub fn max_abs(&self) -> f64 {
        self.grads
            .iter()
            .flatten()
            .flat_map(|t| t.data.iter())
            .map(|v| v.to_f64().unwrap_or(f64::NAN).abs())
            .fold(0.0, f64::max)
    }

    pub fn all_finite(&self) -> bool {
        self.grads.iter().flatten().all(|t| t.data.iter().all(|v| v.is_finite()))
    }
}

fn sigmoid<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

impl<'p, T: Scalar> Graph<'p, T> {
    /// A graph that records what is needed for [`Graph::backward`].
    pub fn new(params: &'p ParamStore<T>) -> Self {
        Graph {
            params,
            nodes: Vec::new(),
            param_vars: HashMap::new(),
            track: true,
        }
    }

    /// A graph for inference only; `backward` returns no gradients.
    pub fn inference(params: &'p ParamStore<T>) -> Self {
        Graph {
            track: false,
            ..Graph::new(params)
        }
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad: needs_grad && self.track,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> [usize; 4] {
        self.nodes[v.0].value.shape
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn input(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Input, false)
    }

    /// Parameter by name. Panics if the store lacks it.
    pub fn param(&mut self, name: &str) -> Var {
        let idx = self
            .params
            .index_of(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"));
        if let Some(&v) = self.param_vars.get(&idx) {
            return v;
        }
        let v = self.push(self.params.tensor(idx).clone(), Op::Param(idx), true);
        self.param_vars.insert(idx, v);
        v
    }

    pub fn has_param(&self, name: &str) -> bool {
        self.params.index_of(name).is_some()
    }

    /// Convolution with weight `{prefix}.weight` and bias `{prefix}.bias`.
    pub fn conv(&mut self, x: Var, prefix: &str, stride: usize, pad: usize) -> Var {
        let w = self.param(&format!("{prefix}.weight"));
        let bname = format!("{prefix}.bias");
        let b = self.has_param(&bname).then(|| self.param(&bname));
        let out = conv2d(
            self.value(x),
            self.value(w),
            b.map(|b| self.value(b)),
            stride,
            pad,
        );
        let ng = self.ng(x) || self.ng(w) || b.is_some_and(|b| self.ng(b));
        self.push(out, Op::Conv { x, w, b, stride, pad }, ng)
    }

    fn zip_map(&self, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Tensor<T> {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.shape, tb.shape, "elementwise shape mismatch");
        Tensor::from_vec(ta.shape, ta.data.iter().zip(&tb.data).map(|(&x, &y)| f(x, y)).collect())
    }

    fn map(&self, a: Var, f: impl Fn(T) -> T) -> Tensor<T> {
        let t = self.value(a);
        Tensor::from_vec(t.shape, t.data.iter().map(|&x| f(x)).collect())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = self.zip_map(a, b, |x, y| x + y);
        let ng = self.ng(a) || self.ng(b);
        self.push(out, Op::Add(a, b), ng)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let out = self.zip_map(a, b, |x, y| x - y);
        let ng = self.ng(a) || self.ng(b);
        self.push(out, Op::Sub(a, b), ng)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let out = self.zip_map(a, b, |x, y| x * y);
        let ng = self.ng(a) || self.ng(b);
        self.push(out, Op::Mul(a, b), ng)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.map(a, |x| if x > T::zero() { x } else { T::zero() });
        let ng = self.ng(a);
        self.push(out, Op::Relu(a), ng)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.map(a, sigmoid);
        let ng = self.ng(a);
        self.push(out, Op::Sigmoid(a), ng)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.map(a, T::tanh);
        let ng = self.ng(a);
        self.push(out, Op::Tanh(a), ng)
    }

    /// `a * x + b` elementwise.
    pub fn affine(&mut self, x: Var, a: f64, b: f64) -> Var {
        let (a, b) = (super::lit::<T>(a), super::lit::<T>(b));
        let out = self.map(x, |v| a * v + b);
        let ng = self.ng(x);
        self.push(out, Op::Affine { x, a }, ng)
    }

    /// Concatenate along channels.
    pub fn concat(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let [n, _, h, w] = self.shape(parts[0]);
        let total: usize = parts
            .iter()
            .map(|&p| {
                let s = self.shape(p);
                assert!(s[0] == n && s[2] == h && s[3] == w, "concat shape mismatch");
                s[1]
            })
            .sum();
        let plane = h * w;
        let mut out = Tensor::zeros([n, total, h, w]);
        for item in 0..n {
            let mut c0 = 0;
            for &p in parts {
                let t = self.value(p);
                let len = t.shape[1] * plane;
                let dst = (item * total + c0) * plane;
                out.data[dst..dst + len].copy_from_slice(&t.data[item * len..(item + 1) * len]);
                c0 += t.shape[1];
            }
        }
        let ng = parts.iter().any(|&p| self.ng(p));
        self.push(out, Op::Concat(parts.to_vec()), ng)
    }

    /// Channels `start..start + len`.
    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Var {
        let [n, c, h, w] = self.shape(x);
        assert!(start + len <= c, "slice out of range");
        let plane = h * w;
        let t = self.value(x);
        let mut out = Tensor::zeros([n, len, h, w]);
        for item in 0..n {
            let src = (item * c + start) * plane;
            out.data[item * len * plane..(item + 1) * len * plane]
                .copy_from_slice(&t.data[src..src + len * plane]);
        }
        let ng = self.ng(x);
        self.push(out, Op::Slice { x, start }, ng)
    }

    /// All-pairs feature correlation: output `[N, H*W, H, W]` where channel
    /// `i*W + j` holds `scale * <a(i,j), b(., .)>`.
    pub fn correlation(&mut self, a: Var, b: Var, scale: f64) -> Var {
        let [n, d, h, w] = self.shape(a);
        assert_eq!(self.shape(b), [n, d, h, w], "correlation shape mismatch");
        let hw = h * w;
        let scale = super::lit::<T>(scale);
        let mut out = Tensor::zeros([n, hw, h, w]);
        for item in 0..n {
            let fa = &self.value(a).data[item * d * hw..(item + 1) * d * hw];
            let fb = &self.value(b).data[item * d * hw..(item + 1) * d * hw];
            gemm(hw, d, hw, scale, fa, true, fb, false, T::zero(), &mut out.data[item * hw * hw..(item + 1) * hw * hw]);
        }
        let ng = self.ng(a) || self.ng(b);
        self.push(out, Op::Correlation { a, b, scale }, ng)
    }

    /// 2x2 mean pooling with stride 2 (odd trailing rows/columns dropped).
    pub fn avg_pool2(&mut self, x: Var) -> Var {
        let [n, c, h, w] = self.shape(x);
        let (ho, wo) = (h / 2, w / 2);
        let t = self.value(x);
        let quarter = super::lit::<T>(0.25);
        let mut out = Tensor::zeros([n, c, ho, wo]);
        for nc in 0..n * c {
            let src = &t.data[nc * h * w..(nc + 1) * h * w];
            let dst = &mut out.data[nc * ho * wo..(nc + 1) * ho * wo];
            for i in 0..ho {
                for j in 0..wo {
                    let r0 = 2 * i * w + 2 * j;
                    dst[i * wo + j] = quarter * (src[r0] + src[r0 + 1] + src[r0 + w] + src[r0 + w + 1]);
                }
            }
        }
        let ng = self.ng(x);
        self.push(out, Op::AvgPool2(x), ng)
    }

    /// Bilinear window lookup in one correlation level.
    ///
    /// `corr` is `[N, Hs*Ws, h, w]`, `flow` is `[N, 2, Hs, Ws]` in source-grid
    /// units. For source cell `(i, j)` the window is centered at
    /// `((j + fx) / div, (i + fy) / div)` in level coordinates; the output
    /// channel `(dy + r) * (2r + 1) + (dx + r)` holds the sample at offset
    /// `(dx, dy)`. Samples outside the volume read as zero.
    pub fn lookup(&mut self, corr: Var, flow: Var, radius: usize, div: f64) -> Var {
        let [n, hw, h, w] = self.shape(corr);
        let [fnn, two, hs, ws] = self.shape(flow);
        assert!(fnn == n && two == 2 && hs * ws == hw, "lookup shape mismatch");
        let div = super::lit::<T>(div);
        let side = 2 * radius + 1;
        let ct = self.value(corr);
        let ft = self.value(flow);
        let mut out = Tensor::zeros([n, side * side, hs, ws]);
        for item in 0..n {
            for i in 0..hs {
                for j in 0..ws {
                    let p = i * ws + j;
                    let fx = ft.data[(item * 2) * hw + p];
                    let fy = ft.data[(item * 2 + 1) * hw + p];
                    let cx = (T::from_usize(j).unwrap() + fx) / div;
                    let cy = (T::from_usize(i).unwrap() + fy) / div;
                    let vol = &ct.data[(item * hw + p) * h * w..(item * hw + p + 1) * h * w];
                    for oy in 0..side {
                        for ox in 0..side {
                            let sx = cx + T::from_usize(ox).unwrap() - T::from_usize(radius).unwrap();
                            let sy = cy + T::from_usize(oy).unwrap() - T::from_usize(radius).unwrap();
                            let (v, _, _) = bilinear_zero(vol, h, w, sx, sy);
                            out.data[((item * side * side) + oy * side + ox) * hw + p] = v;
                        }
                    }
                }
            }
        }
        let ng = self.ng(corr) || self.ng(flow);
        self.push(out, Op::Lookup { corr, flow, radius, div }, ng)
    }

    /// Convex upsampling by `factor`: every fine pixel is a softmax-weighted
    /// combination of the 3x3 coarse neighborhood (edge-clamped), times `mult`.
    ///
    /// `logits` is `[N, 9 * factor^2, h, w]` with channel `k * factor^2 + a * factor + b`
    /// weighting neighbor `k` (row-major over offsets -1..=1) for sub-pixel `(a, b)`.
    pub fn convex_upsample(&mut self, x: Var, logits: Var, factor: usize, mult: f64) -> Var {
        let [n, c, h, w] = self.shape(x);
        let f2 = factor * factor;
        assert_eq!(self.shape(logits), [n, 9 * f2, h, w], "upsample logits shape");
        let mult = super::lit::<T>(mult);
        let weights = softmax9(self.value(logits), f2);
        let xt = self.value(x);
        let (fh, fw) = (h * factor, w * factor);
        let mut out = Tensor::zeros([n, c, fh, fw]);
        for item in 0..n {
            for i in 0..h {
                for j in 0..w {
                    for s in 0..f2 {
                        let (a, b) = (s / factor, s % factor);
                        let mut wk = [T::zero(); 9];
                        for (k, wv) in wk.iter_mut().enumerate() {
                            *wv = weights[((item * 9 + k) * f2 + s) * h * w + i * w + j];
                        }
                        for ch in 0..c {
                            let plane = &xt.data[(item * c + ch) * h * w..(item * c + ch + 1) * h * w];
                            let mut acc = T::zero();
                            for (k, &wv) in wk.iter().enumerate() {
                                if let Some(q) = neighbor(i, j, k, h, w) {
                                    acc += wv * plane[q];
                                }
                            }
                            out.data[(item * c + ch) * fh * fw + (i * factor + a) * fw + j * factor + b] = mult * acc;
                        }
                    }
                }
            }
        }
        let ng = self.ng(x) || self.ng(logits);
        self.push(out, Op::ConvexUp { x, logits, factor, mult }, ng)
    }

    /// Keep the top-left `h x w` window.
    pub fn crop(&mut self, x: Var, h: usize, w: usize) -> Var {
        let [n, c, ih, iw] = self.shape(x);
        assert!(h <= ih && w <= iw, "crop larger than input");
        if (h, w) == (ih, iw) {
            return x;
        }
        let t = self.value(x);
        let mut out = Tensor::zeros([n, c, h, w]);
        for nc in 0..n * c {
            for r in 0..h {
                let src = nc * ih * iw + r * iw;
                out.data[nc * h * w + r * w..nc * h * w + (r + 1) * w].copy_from_slice(&t.data[src..src + w]);
            }
        }
        let ng = self.ng(x);
        self.push(out, Op::Crop(x), ng)
    }

    /// Reverse pass from `(output, d loss / d output)` seeds.
    pub fn backward(&self, seeds: &[(Var, Tensor<T>)]) -> Gradients<T> {
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        for (v, g) in seeds {
            assert_eq!(self.shape(*v), g.shape, "seed shape mismatch");
            if self.ng(*v) {
                accumulate(&mut grads[v.0], g.clone());
            }
        }
        let mut out: Vec<Option<Tensor<T>>> = (0..self.params.len()).map(|_| None).collect();
        for idx in (0..self.nodes.len()).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Input => {}
                Op::Param(p) => accumulate(&mut out[*p], g),
                op => self.backward_op(op, &node.value, g, &mut grads),
            }
        }
        Gradients { grads: out }
    }

    fn send(&self, grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
        if self.ng(v) {
            accumulate(&mut grads[v.0], g);
        }
    }

    fn backward_op(&self, op: &Op<T>, y: &Tensor<T>, g: Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        match op {
            Op::Input | Op::Param(_) => unreachable!(),
            Op::Conv { x, w, b, stride, pad } => {
                let cg = conv2d_backward(self.value(*x), self.value(*w), &g, *stride, *pad, self.ng(*x));
                if let Some(dx) = cg.dx {
                    self.send(grads, *x, dx);
                }
                self.send(grads, *w, cg.dw);
                if let Some(b) = b {
                    self.send(grads, *b, cg.db);
                }
            }
            Op::Add(a, b) => {
                self.send(grads, *a, g.clone());
                self.send(grads, *b, g);
            }
            Op::Sub(a, b) => {
                if self.ng(*b) {
                    let neg = Tensor::from_vec(g.shape, g.data.iter().map(|&v| -v).collect());
                    self.send(grads, *b, neg);
                }
                self.send(grads, *a, g);
            }
            Op::Mul(a, b) => {
                if self.ng(*a) {
                    let bv = self.value(*b);
                    let da = g.data.iter().zip(&bv.data).map(|(&gv, &x)| gv * x).collect();
                    self.send(grads, *a, Tensor::from_vec(g.shape, da));
                }
                if self.ng(*b) {
                    let av = self.value(*a);
                    let db = g.data.iter().zip(&av.data).map(|(&gv, &x)| gv * x).collect();
                    self.send(grads, *b, Tensor::from_vec(g.shape, db));
                }
            }
            Op::Relu(a) => {
                let d = g
                    .data
                    .iter()
                    .zip(&y.data)
                    .map(|(&gv, &yv)| if yv > T::zero() { gv } else { T::zero() })
                    .collect();
                self.send(grads, *a, Tensor::from_vec(g.shape, d));
            }
            Op::Sigmoid(a) => {
                let d = g
                    .data
                    .iter()
                    .zip(&y.data)
                    .map(|(&gv, &yv)| gv * yv * (T::one() - yv))
                    .collect();
                self.send(grads, *a, Tensor::from_vec(g.shape, d));
            }
            Op::Tanh(a) => {
                let d = g
                    .data
                    .iter()
                    .zip(&y.data)
                    .map(|(&gv, &yv)| gv * (T::one() - yv * yv))
                    .collect();
                self.send(grads, *a, Tensor::from_vec(g.shape, d));
            }
            Op::Affine { x, a } => {
                let d = g.data.iter().map(|&gv| gv * *a).collect();
                self.send(grads, *x, Tensor::from_vec(g.shape, d));
            }
            Op::Concat(parts) => {
                let [n, total, h, w] = g.shape;
                let plane = h * w;
                let mut c0 = 0;
                for &p in parts {
                    let c = self.shape(p)[1];
                    if self.ng(p) {
                        let mut d = Tensor::zeros([n, c, h, w]);
                        for item in 0..n {
                            let src = (item * total + c0) * plane;
                            d.data[item * c * plane..(item + 1) * c * plane]
                                .copy_from_slice(&g.data[src..src + c * plane]);
                        }
                        self.send(grads, p, d);
                    }
                    c0 += c;
                }
            }
            Op::Slice { x, start } => {
                let [n, c, h, w] = self.shape(*x);
                let len = g.shape[1];
                let plane = h * w;
                let mut d = Tensor::zeros([n, c, h, w]);
                for item in 0..n {
                    let dst = (item * c + start) * plane;
                    d.data[dst..dst + len * plane]
                        .copy_from_slice(&g.data[item * len * plane..(item + 1) * len * plane]);
                }
                self.send(grads, *x, d);
            }
            Op::Correlation { a, b, scale } => {
                let [n, d, h, w] = self.shape(*a);
                let hw = h * w;
                if self.ng(*a) {
                    let mut da = Tensor::zeros([n, d, h, w]);
                    for item in 0..n {
                        let fb = &self.value(*b).data[item * d * hw..(item + 1) * d * hw];
                        let gi = &g.data[item * hw * hw..(item + 1) * hw * hw];
                        gemm(d, hw, hw, *scale, fb, false, gi, true, T::zero(), &mut da.data[item * d * hw..(item + 1) * d * hw]);
                    }
                    self.send(grads, *a, da);
                }
                if self.ng(*b) {
                    let mut db = Tensor::zeros([n, d, h, w]);
                    for item in 0..n {
                        let fa = &self.value(*a).data[item * d * hw..(item + 1) * d * hw];
                        let gi = &g.data[item * hw * hw..(item + 1) * hw * hw];
                        gemm(d, hw, hw, *scale, fa, false, gi, false, T::zero(), &mut db.data[item * d * hw..(item + 1) * d * hw]);
                    }
                    self.send(grads, *b, db);
                }
            }
            Op::AvgPool2(x) => {
                let [n, c, h, w] = self.shape(*x);
                let (ho, wo) = (g.shape[2], g.shape[3]);
                let quarter = super::lit::<T>(0.25);
                let mut d = Tensor::zeros([n, c, h, w]);
                for nc in 0..n * c {
                    for i in 0..ho {
                        for j in 0..wo {
                            let v = quarter * g.data[nc * ho * wo + i * wo + j];
                            let r0 = nc * h * w + 2 * i * w + 2 * j;
                            d.data[r0] += v;
                            d.data[r0 + 1] += v;
                            d.data[r0 + w] += v;
                            d.data[r0 + w + 1] += v;
                        }
                    }
                }
                self.send(grads, *x, d);
            }
            Op::Lookup { corr, flow, radius, div } => self.lookup_backward(*corr, *flow, *radius, *div, &g, grads),
            Op::ConvexUp { x, logits, factor, mult } => {
                self.convex_backward(*x, *logits, *factor, *mult, &g, grads)
            }
            Op::Crop(x) => {
                let [n, c, ih, iw] = self.shape(*x);
                let [_, _, h, w] = g.shape;
                let mut d = Tensor::zeros([n, c, ih, iw]);
                for nc in 0..n * c {
                    for r in 0..h {
                        let dst = nc * ih * iw + r * iw;
                        d.data[dst..dst + w].copy_from_slice(&g.data[nc * h * w + r * w..nc * h * w + (r + 1) * w]);
                    }
                }
                self.send(grads, *x, d);
            }
        }
    }

    fn lookup_backward(
        &self,
        corr: Var,
        flow: Var,
        radius: usize,
        div: T,
        g: &Tensor<T>,
        grads: &mut [Option<Tensor<T>>],
    ) {
        let [n, hw, h, w] = self.shape(corr);
        let [_, _, hs, ws] = self.shape(flow);
        let side = 2 * radius + 1;
        let ct = self.value(corr);
        let ft = self.value(flow);
        let (need_c, need_f) = (self.ng(corr), self.ng(flow));
        let mut dc = need_c.then(|| Tensor::zeros(ct.shape));
        let mut df = need_f.then(|| Tensor::zeros(ft.shape));
        for item in 0..n {
            for i in 0..hs {
                for j in 0..ws {
                    let p = i * ws + j;
                    let fx = ft.data[(item * 2) * hw + p];
                    let fy = ft.data[(item * 2 + 1) * hw + p];
                    let cx = (T::from_usize(j).unwrap() + fx) / div;
                    let cy = (T::from_usize(i).unwrap() + fy) / div;
                    let base = (item * hw + p) * h * w;
                    let vol = &ct.data[base..base + h * w];
                    let (mut gx, mut gy) = (T::zero(), T::zero());
                    for oy in 0..side {
                        for ox in 0..side {
                            let gv = g.data[((item * side * side) + oy * side + ox) * hw + p];
                            if gv == T::zero() {
                                continue;
                            }
                            let sx = cx + T::from_usize(ox).unwrap() - T::from_usize(radius).unwrap();
                            let sy = cy + T::from_usize(oy).unwrap() - T::from_usize(radius).unwrap();
                            if need_f {
                                let (_, dx, dy) = bilinear_zero(vol, h, w, sx, sy);
                                gx += gv * dx;
                                gy += gv * dy;
                            }
                            if let Some(dc) = dc.as_mut() {
                                bilinear_scatter(&mut dc.data[base..base + h * w], h, w, sx, sy, gv);
                            }
                        }
                    }
                    if let Some(df) = df.as_mut() {
                        df.data[(item * 2) * hw + p] += gx / div;
                        df.data[(item * 2 + 1) * hw + p] += gy / div;
                    }
                }
            }
        }
        if let Some(dc) = dc {
            self.send(grads, corr, dc);
        }
        if let Some(df) = df {
            self.send(grads, flow, df);
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn convex_backward(
        &self,
        x: Var,
        logits: Var,
        factor: usize,
        mult: T,
        g: &Tensor<T>,
        grads: &mut [Option<Tensor<T>>],
    ) {
        let [n, c, h, w] = self.shape(x);
        let f2 = factor * factor;
        let weights = softmax9(self.value(logits), f2);
        let xt = self.value(x);
        let (fh, fw) = (h * factor, w * factor);
        let mut dx = self.ng(x).then(|| Tensor::zeros([n, c, h, w]));
        let mut dl = self.ng(logits).then(|| Tensor::zeros([n, 9 * f2, h, w]));
        for item in 0..n {
            for i in 0..h {
                for j in 0..w {
                    for s in 0..f2 {
                        let (a, b) = (s / factor, s % factor);
                        let widx = |k: usize| ((item * 9 + k) * f2 + s) * h * w + i * w + j;
                        // d loss / d weight_k
                        let mut dw = [T::zero(); 9];
                        for ch in 0..c {
                            let gv = mult * g.data[(item * c + ch) * fh * fw + (i * factor + a) * fw + j * factor + b];
                            let plane = (item * c + ch) * h * w;
                            for (k, dwk) in dw.iter_mut().enumerate() {
                                if let Some(q) = neighbor(i, j, k, h, w) {
                                    *dwk += gv * xt.data[plane + q];
                                    if let Some(dx) = dx.as_mut() {
                                        dx.data[plane + q] += gv * weights[widx(k)];
                                    }
                                }
                            }
                        }
                        if let Some(dl) = dl.as_mut() {
                            let dot: T = (0..9).map(|k| dw[k] * weights[widx(k)]).sum();
                            for (k, &dwk) in dw.iter().enumerate() {
                                dl.data[widx(k)] += weights[widx(k)] * (dwk - dot);
                            }
                        }
                    }
                }
            }
        }
        if let Some(dx) = dx {
            self.send(grads, x, dx);
        }
        if let Some(dl) = dl {
            self.send(grads, logits, dl);
        }
    }
}

fn accumulate<T: Scalar>(slot: &mut Option<Tensor<T>>, g: Tensor<T>) {
    match slot {
        Some(acc) => {
            for (a, b) in acc.data.iter_mut().zip(&g.data) {
                *a += *b;
            }
        }
        None => *slot = Some(g),
    }
}

/// Flat index of neighbor `k` (row-major over offsets -1..=1) of `(i, j)`,
/// clamped to the grid.
#[inline]
fn neighbor(i: usize, j: usize, k: usize, h: usize, w: usize) -> Option<usize> {
    let r = (i + k / 3).saturating_sub(1).min(h - 1);
    let c = (j + k % 3).saturating_sub(1).min(w - 1);
    Some(r * w + c)
}

/// Softmax over the 9-neighbor axis of `[N, 9*f2, h, w]` logits.
pub(crate) fn softmax9<T: Scalar>(logits: &Tensor<T>, f2: usize) -> Vec<T> {
    let [n, _, h, w] = logits.shape;
    let hw = h * w;
    let mut out = vec![T::zero(); logits.numel()];
    for item in 0..n {
        for s in 0..f2 {
            for p in 0..hw {
                let idx = |k: usize| ((item * 9 + k) * f2 + s) * hw + p;
                let m = (0..9).map(|k| logits.data[idx(k)]).fold(T::neg_infinity(), T::max);
                let mut z = T::zero();
                for k in 0..9 {
                    let e = (logits.data[idx(k)] - m).exp();
                    out[idx(k)] = e;
                    z += e;
                }
                for k in 0..9 {
                    out[idx(k)] = out[idx(k)] / z;
                }
            }
        }
    }
    out
}

/// Bilinear sample with zero padding, plus its partial derivatives in x and y.
#[inline]
fn bilinear_zero<T: Scalar>(vol: &[T], h: usize, w: usize, x: T, y: T) -> (T, T, T) {
    let x0 = x.floor();
    let y0 = y.floor();
    let (ax, ay) = (x - x0, y - y0);
    let (ix, iy) = (x0.to_isize().unwrap_or(isize::MIN / 2), y0.to_isize().unwrap_or(isize::MIN / 2));
    let at = |r: isize, c: isize| -> T {
        if r >= 0 && r < h as isize && c >= 0 && c < w as isize {
            vol[r as usize * w + c as usize]
        } else {
            T::zero()
        }
    };
    let v00 = at(iy, ix);
    let v01 = at(iy, ix + 1);
    let v10 = at(iy + 1, ix);
    let v11 = at(iy + 1, ix + 1);
    let one = T::one();
    let v = (one - ay) * ((one - ax) * v00 + ax * v01) + ay * ((one - ax) * v10 + ax * v11);
    let dx = (one - ay) * (v01 - v00) + ay * (v11 - v10);
    let dy = (one - ax) * (v10 - v00) + ax * (v11 - v01);
    (v, dx, dy)
}

#[inline]
fn bilinear_scatter<T: Scalar>(dst: &mut [T], h: usize, w: usize, x: T, y: T, g: T) {
    let x0 = x.floor();
    let y0 = y.floor();
    let (ax, ay) = (x - x0, y - y0);
    let (ix, iy) = (x0.to_isize().unwrap_or(isize::MIN / 2), y0.to_isize().unwrap_or(isize::MIN / 2));
    let one = T::one();
    for (r, c, wt) in [
        (iy, ix, (one - ay) * (one - ax)),
        (iy, ix + 1, (one - ay) * ax),
        (iy + 1, ix, ay * (one - ax)),
        (iy + 1, ix + 1, ay * ax),
    ] {
        if r >= 0 && r < h as isize && c >= 0 && c < w as isize {
            dst[r as usize * w + c as usize] += g * wt;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rand_tensor(shape: [usize; 4], seed: u64) -> Tensor<f64> {
        let mut s = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
        let data = (0..shape.iter().product::<usize>())
            .map(|_| {
                s ^= s << 13;
                s ^= s >> 7;
                s ^= s << 17;
                (s >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
            })
            .collect();
        Tensor::from_vec(shape, data)
    }

    /// Check d(sum(out * probe))/d(param) against central differences.
    fn check(store: &ParamStore<f64>, build: impl Fn(&mut Graph<f64>) -> Var) {
        let loss = |store: &ParamStore<f64>| {
            let mut g = Graph::new(store);
            let out = build(&mut g);
            let probe = rand_tensor(g.shape(out), 99);
            g.value(out).data.iter().zip(&probe.data).map(|(a, b)| a * b).sum::<f64>()
        };
        let mut g = Graph::new(store);
        let out = build(&mut g);
        let probe = rand_tensor(g.shape(out), 99);
        let grads = g.backward(&[(out, probe)]);
        let h = 1e-6;
        for idx in 0..store.len() {
            let an = grads.get(idx).expect("gradient for every parameter");
            for k in 0..store.tensor(idx).numel() {
                let mut plus = store.clone();
                plus.tensor_mut(idx).data[k] += h;
                let mut minus = store.clone();
                minus.tensor_mut(idx).data[k] -= h;
                let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
                let a = an.data[k];
                assert!(
                    (a - fd).abs() <= 1e-6 * (1.0 + fd.abs()),
                    "{} [{k}]: analytic {a} vs fd {fd}",
                    store.name(idx)
                );
            }
        }
    }

    #[test]
    fn conv_gradients() {
        let mut s = ParamStore::new();
        s.insert("x", rand_tensor([2, 3, 5, 6], 1));
        s.insert("c.weight", rand_tensor([4, 3, 3, 3], 2));
        s.insert("c.bias", rand_tensor([1, 4, 1, 1], 3));
        check(&s, |g| {
            let x = g.param("x");
            g.conv(x, "c", 2, 1)
        });
    }

    #[test]
    fn pointwise_gradients() {
        let mut s = ParamStore::new();
        s.insert("a", rand_tensor([2, 3, 4, 4], 4));
        s.insert("b", rand_tensor([2, 3, 4, 4], 5));
        check(&s, |g| {
            let a = g.param("a");
            let b = g.param("b");
            let sa = g.sigmoid(a);
            let tb = g.tanh(b);
            let m = g.mul(sa, tb);
            let r = g.relu(b);
            let d = g.sub(m, r);
            let e = g.affine(d, -1.5, 0.25);
            let c = g.concat(&[e, a]);
            let sl = g.slice(c, 2, 3);
            let p = g.avg_pool2(sl);
            let q = g.avg_pool2(b);
            let out = g.add(p, q);
            g.crop(out, 1, 2)
        });
    }

    #[test]
    fn correlation_and_lookup_gradients() {
        let mut s = ParamStore::new();
        s.insert("a", rand_tensor([1, 3, 4, 4], 6));
        s.insert("b", rand_tensor([1, 3, 4, 4], 7));
        // keep sample points away from integer lattice lines
        let mut flow = rand_tensor([1, 2, 4, 4], 8);
        for v in flow.data.iter_mut() {
            *v = *v * 1.7 + 0.31;
        }
        s.insert("flow", flow);
        check(&s, |g| {
            let a = g.param("a");
            let b = g.param("b");
            let f = g.param("flow");
            let c = g.correlation(a, b, 0.5);
            let l0 = g.lookup(c, f, 1, 1.0);
            let c1 = g.avg_pool2(c);
            let l1 = g.lookup(c1, f, 1, 2.0);
            g.concat(&[l0, l1])
        });
    }

    #[test]
    fn convex_upsample_gradients() {
        let mut s = ParamStore::new();
        s.insert("x", rand_tensor([2, 2, 3, 3], 9));
        s.insert("logits", rand_tensor([2, 36, 3, 3], 10));
        check(&s, |g| {
            let x = g.param("x");
            let l = g.param("logits");
            g.convex_upsample(x, l, 2, 2.0)
        });
    }

    #[test]
    fn softmax_weights_are_convex() {
        let l = rand_tensor([1, 9 * 16, 3, 2], 11).data.iter().map(|v| v * 20.0).collect();
        let l = Tensor::from_vec([1, 9 * 16, 3, 2], l);
        let w = softmax9(&l, 16);
        for s in 0..16 {
            for p in 0..6 {
                let sum: f64 = (0..9).map(|k| w[(k * 16 + s) * 6 + p]).sum();
                assert!((sum - 1.0).abs() < 1e-12);
                assert!((0..9).all(|k| w[(k * 16 + s) * 6 + p] >= 0.0));
            }
        }
    }

    #[test]
    fn inference_graph_has_no_gradients() {
        let mut s = ParamStore::new();
        s.insert("a", rand_tensor([1, 1, 2, 2], 12));
        let mut g = Graph::inference(&s);
        let a = g.param("a");
        let r = g.relu(a);
        let grads = g.backward(&[(r, Tensor::zeros([1, 1, 2, 2]))]);
        assert!(grads.get(0).is_none());
    }
}
