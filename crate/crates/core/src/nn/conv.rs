use super::{gemm, Scalar, Tensor};

/// Geometry of one 2-D convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeom {
    pub fn out_h(&self) -> usize {
        (self.height + 2 * self.pad - self.kh) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.width + 2 * self.pad - self.kw) / self.stride + 1
    }

    pub fn rows(&self) -> usize {
        self.channels * self.kh * self.kw
    }
}

/// Output columns `lo..hi` whose input column `ow * stride + kj - pad` is in range.
#[inline]
fn valid_cols(g: &ConvGeom, kj: usize, wo: usize) -> (usize, usize) {
    let lo = g.pad.saturating_sub(kj).div_ceil(g.stride);
    let last = g.width as isize - 1 + g.pad as isize - kj as isize;
    let hi = if last < 0 { 0 } else { (last as usize / g.stride + 1).min(wo) };
    (lo.min(hi), hi)
}

/// Unfold one image (`C x H x W`) into `(C*kh*kw) x (Ho*Wo)` columns.
///
/// Row `r` of the result starts at `cols[r * ld + off]`, which lets several
/// batch items share one wide column matrix.
pub(crate) fn im2col<T: Scalar>(x: &[T], g: &ConvGeom, cols: &mut [T], ld: usize, off: usize) {
    let (ho, wo) = (g.out_h(), g.out_w());
    let l = ho * wo;
    let mut row = 0;
    for c in 0..g.channels {
        let plane = &x[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let (lo, hi) = valid_cols(g, kj, wo);
                let dst = &mut cols[row * ld + off..row * ld + off + l];
                for oh in 0..ho {
                    let ih = (oh * g.stride + ki) as isize - g.pad as isize;
                    let out_row = &mut dst[oh * wo..(oh + 1) * wo];
                    if ih < 0 || ih >= g.height as isize {
                        out_row.fill(T::zero());
                        continue;
                    }
                    let src = &plane[ih as usize * g.width..(ih as usize + 1) * g.width];
                    out_row[..lo].fill(T::zero());
                    out_row[hi..].fill(T::zero());
                    if lo < hi {
                        let first = lo * g.stride + kj - g.pad;
                        if g.stride == 1 {
                            out_row[lo..hi].copy_from_slice(&src[first..first + hi - lo]);
                        } else {
                            for (o, v) in out_row[lo..hi].iter_mut().zip(src[first..].iter().step_by(g.stride)) {
                                *o = *v;
                            }
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulate columns back into an image gradient.
pub(crate) fn col2im<T: Scalar>(cols: &[T], g: &ConvGeom, dx: &mut [T], ld: usize, off: usize) {
    let (ho, wo) = (g.out_h(), g.out_w());
    let l = ho * wo;
    let mut row = 0;
    for c in 0..g.channels {
        let plane = &mut dx[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let (lo, hi) = valid_cols(g, kj, wo);
                let src = &cols[row * ld + off..row * ld + off + l];
                row += 1;
                if lo >= hi {
                    continue;
                }
                let first = lo * g.stride + kj - g.pad;
                for oh in 0..ho {
                    let ih = (oh * g.stride + ki) as isize - g.pad as isize;
                    if ih < 0 || ih >= g.height as isize {
                        continue;
                    }
                    let dst = &mut plane[ih as usize * g.width..(ih as usize + 1) * g.width];
                    let s_row = &src[oh * wo + lo..oh * wo + hi];
                    if g.stride == 1 {
                        for (d, v) in dst[first..first + hi - lo].iter_mut().zip(s_row) {
                            *d += *v;
                        }
                    } else {
                        for (d, v) in dst[first..].iter_mut().step_by(g.stride).zip(s_row) {
                            *d += *v;
                        }
                    }
                }
            }
        }
    }
}

/// Batched 2-D convolution. `w` is `[Co, Ci, kh, kw]`, `b` is `[1, Co, 1, 1]`.
pub(crate) fn conv2d<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, b: Option<&Tensor<T>>, stride: usize, pad: usize) -> Tensor<T> {
    let [n, ci, h, wd] = x.shape;
    let [co, wci, kh, kw] = w.shape;
    assert_eq!(ci, wci, "conv input channels {ci} vs weight {wci}");
    let g = ConvGeom {
        channels: ci,
        height: h,
        width: wd,
        kh,
        kw,
        stride,
        pad,
    };
    let (ho, wo) = (g.out_h(), g.out_w());
    let l = ho * wo;
    let ld = n * l;
    let mut cols = vec![T::zero(); g.rows() * ld];
    for item in 0..n {
        im2col(&x.data[item * x.item_len()..(item + 1) * x.item_len()], &g, &mut cols, ld, item * l);
    }
    let mut prod = vec![T::zero(); co * ld];
    gemm(co, g.rows(), ld, T::one(), &w.data, false, &cols, false, T::zero(), &mut prod);
    let mut out = Tensor::zeros([n, co, ho, wo]);
    for item in 0..n {
        for c in 0..co {
            let bias = b.map_or(T::zero(), |b| b.data[c]);
            let src = &prod[c * ld + item * l..c * ld + (item + 1) * l];
            let dst = &mut out.data[(item * co + c) * l..(item * co + c + 1) * l];
            for (d, s) in dst.iter_mut().zip(src) {
                *d = *s + bias;
            }
        }
    }
    out
}

/// Gradients of [`conv2d`] with respect to its input, weight and bias.
pub(crate) struct ConvGrads<T> {
    pub dx: Option<Tensor<T>>,
    pub dw: Tensor<T>,
    pub db: Tensor<T>,
}

pub(crate) fn conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    dy: &Tensor<T>,
    stride: usize,
    pad: usize,
    need_dx: bool,
) -> ConvGrads<T> {
    let [n, ci, h, wd] = x.shape;
    let [co, _, kh, kw] = w.shape;
    let g = ConvGeom {
        channels: ci,
        height: h,
        width: wd,
        kh,
        kw,
        stride,
        pad,
    };
    let l = g.out_h() * g.out_w();
    let ld = n * l;
    let rows = g.rows();
    let mut cols = vec![T::zero(); rows * ld];
    for item in 0..n {
        im2col(&x.data[item * x.item_len()..(item + 1) * x.item_len()], &g, &mut cols, ld, item * l);
    }
    let mut dyp = vec![T::zero(); co * ld];
    let mut db = Tensor::zeros([1, co, 1, 1]);
    for item in 0..n {
        for c in 0..co {
            let src = &dy.data[(item * co + c) * l..(item * co + c + 1) * l];
            dyp[c * ld + item * l..c * ld + (item + 1) * l].copy_from_slice(src);
            db.data[c] += src.iter().copied().sum::<T>();
        }
    }
    let mut dw = Tensor::zeros(w.shape);
    gemm(co, ld, rows, T::one(), &dyp, false, &cols, true, T::zero(), &mut dw.data);
    let dx = need_dx.then(|| {
        // reuse the column buffer for the input-side gradient
        gemm(rows, co, ld, T::one(), &w.data, true, &dyp, false, T::zero(), &mut cols);
        let mut dx = Tensor::zeros(x.shape);
        let il = x.item_len();
        for item in 0..n {
            col2im(&cols, &g, &mut dx.data[item * il..(item + 1) * il], ld, item * l);
        }
        dx
    });
    ConvGrads { dx, dw, db }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv2d_matches_direct_loops() {
        let x = Tensor::from_vec([2, 2, 5, 4], (0..80).map(|i| (i as f64 * 0.37).sin()).collect());
        let w = Tensor::from_vec([3, 2, 3, 3], (0..54).map(|i| (i as f64 * 0.23).cos()).collect());
        let b = Tensor::from_vec([1, 3, 1, 1], vec![0.1, -0.2, 0.3]);
        for (stride, pad) in [(1, 1), (2, 1), (1, 0), (2, 2)] {
            let y = conv2d(&x, &w, Some(&b), stride, pad);
            let [_, _, ho, wo] = y.shape;
            for n in 0..2 {
                for o in 0..3 {
                    for i in 0..ho {
                        for j in 0..wo {
                            let mut acc = b.data[o];
                            for c in 0..2 {
                                for ki in 0..3 {
                                    for kj in 0..3 {
                                        let r = (i * stride + ki) as isize - pad as isize;
                                        let q = (j * stride + kj) as isize - pad as isize;
                                        if (0..5).contains(&r) && (0..4).contains(&q) {
                                            acc += w.data[((o * 2 + c) * 3 + ki) * 3 + kj]
                                                * x.data[((n * 2 + c) * 5 + r as usize) * 4 + q as usize];
                                        }
                                    }
                                }
                            }
                            let got = y.data[((n * 3 + o) * ho + i) * wo + j];
                            assert!((got - acc).abs() < 1e-12);
                        }
                    }
                }
            }
        }
    }

    fn im2col_naive(x: &[f64], g: &ConvGeom) -> Vec<f64> {
        let (ho, wo) = (g.out_h(), g.out_w());
        let mut out = vec![0.0; g.rows() * ho * wo];
        let mut row = 0;
        for c in 0..g.channels {
            for ki in 0..g.kh {
                for kj in 0..g.kw {
                    for oh in 0..ho {
                        for ow in 0..wo {
                            let ih = (oh * g.stride + ki) as isize - g.pad as isize;
                            let iw = (ow * g.stride + kj) as isize - g.pad as isize;
                            if ih >= 0 && iw >= 0 && (ih as usize) < g.height && (iw as usize) < g.width {
                                out[row * ho * wo + oh * wo + ow] =
                                    x[(c * g.height + ih as usize) * g.width + iw as usize];
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
        out
    }

    #[test]
    fn im2col_matches_naive_unfold() {
        for (h, w, k, stride, pad) in [(5, 6, 3, 1, 1), (5, 6, 3, 2, 1), (7, 4, 7, 1, 3), (8, 9, 7, 2, 3), (3, 3, 1, 2, 0), (4, 5, 3, 3, 2)] {
            let g = ConvGeom {
                channels: 2,
                height: h,
                width: w,
                kh: k,
                kw: k,
                stride,
                pad,
            };
            let x: Vec<f64> = (0..2 * h * w).map(|i| i as f64 + 1.0).collect();
            let l = g.out_h() * g.out_w();
            let mut cols = vec![f64::NAN; g.rows() * l];
            im2col(&x, &g, &mut cols, l, 0);
            assert_eq!(cols, im2col_naive(&x, &g), "{h}x{w} k{k} s{stride} p{pad}");
        }
    }

    #[test]
    fn col2im_is_the_adjoint_of_im2col() {
        let g = ConvGeom {
            channels: 2,
            height: 5,
            width: 6,
            kh: 3,
            kw: 3,
            stride: 2,
            pad: 1,
        };
        let x: Vec<f64> = (0..60).map(|i| (i as f64 * 0.7).sin()).collect();
        let l = g.out_h() * g.out_w();
        let y: Vec<f64> = (0..g.rows() * l).map(|i| (i as f64 * 0.3).cos()).collect();
        let mut cols = vec![0.0; g.rows() * l];
        im2col(&x, &g, &mut cols, l, 0);
        let mut back = vec![0.0; 60];
        col2im(&y, &g, &mut back, l, 0);
        let lhs: f64 = cols.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }
}
