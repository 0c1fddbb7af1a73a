//! Raw numeric kernels over row-major slices.
//!
//! Nothing here knows about graphs; the autodiff layer validates shapes and
//! calls into these. Matrix products go through `ndarray`'s GEMM.

use ndarray::linalg::general_mat_mul;
use ndarray::{ArrayView2, ArrayViewMut2};

/// `c = a·b + beta·c` with optional transposition of either operand.
/// `a` is `m×k` (or `k×m` stored when `ta`), `b` is `k×n` (or `n×k` when `tb`).
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    ta: bool,
    b: &[f64],
    tb: bool,
    beta: f64,
    c: &mut [f64],
) {
    let av = if ta {
        ArrayView2::from_shape((k, m), a).expect("gemm lhs").reversed_axes()
    } else {
        ArrayView2::from_shape((m, k), a).expect("gemm lhs")
    };
    let bv = if tb {
        ArrayView2::from_shape((n, k), b).expect("gemm rhs").reversed_axes()
    } else {
        ArrayView2::from_shape((k, n), b).expect("gemm rhs")
    };
    let mut cv = ArrayViewMut2::from_shape((m, n), c).expect("gemm out");
    general_mat_mul(1.0, &av, &bv, beta, &mut cv);
}

pub fn transpose(rows: usize, cols: usize, a: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = a[r * cols + c];
        }
    }
    out
}

/// Geometry of a 2-D convolution over NCHW input with OIHW weights.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub batch: usize,
    pub in_ch: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_ch: usize,
    pub k_h: usize,
    pub k_w: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeom {
    /// `None` when the kernel does not fit the padded input.
    pub fn new(x: &[usize], w: &[usize], stride: usize, pad: usize) -> Option<Self> {
        if x.len() != 4 || w.len() != 4 || x[1] != w[1] || stride == 0 {
            return None;
        }
        let (ph, pw) = (x[2] + 2 * pad, x[3] + 2 * pad);
        if ph < w[2] || pw < w[3] {
            return None;
        }
        Some(Self {
            batch: x[0],
            in_ch: x[1],
            in_h: x[2],
            in_w: x[3],
            out_ch: w[0],
            k_h: w[2],
            k_w: w[3],
            stride,
            pad,
            out_h: (ph - w[2]) / stride + 1,
            out_w: (pw - w[3]) / stride + 1,
        })
    }

    fn patch_len(&self) -> usize {
        self.in_ch * self.k_h * self.k_w
    }

    fn out_plane(&self) -> usize {
        self.out_h * self.out_w
    }

    fn in_sample(&self) -> usize {
        self.in_ch * self.in_h * self.in_w
    }

    fn is_pointwise(&self) -> bool {
        self.k_h == 1 && self.k_w == 1 && self.stride == 1 && self.pad == 0
    }

    pub fn input_shape(&self) -> [usize; 4] {
        [self.batch, self.in_ch, self.in_h, self.in_w]
    }

    pub fn weight_shape(&self) -> [usize; 4] {
        [self.out_ch, self.in_ch, self.k_h, self.k_w]
    }

    pub fn output_shape(&self) -> [usize; 4] {
        [self.batch, self.out_ch, self.out_h, self.out_w]
    }

    /// Input coordinate hit by output index `o` and kernel tap `k`.
    #[inline]
    fn source(&self, o: usize, k: usize, extent: usize) -> Option<usize> {
        let pos = (o * self.stride + k) as isize - self.pad as isize;
        (pos >= 0 && (pos as usize) < extent).then_some(pos as usize)
    }

    /// Output indices `lo..hi` whose tap `k` lands inside `0..extent`.
    #[inline]
    fn valid_range(&self, k: usize, extent: usize, outputs: usize) -> (usize, usize) {
        let lo = self.pad.saturating_sub(k).div_ceil(self.stride).min(outputs);
        let hi = if extent + self.pad > k {
            ((extent + self.pad - k - 1) / self.stride + 1).min(outputs)
        } else {
            0
        };
        (lo, hi.max(lo))
    }

    fn im2col(&self, x: &[f64], cols: &mut [f64]) {
        let plane = self.out_plane();
        let s = self.stride;
        for c in 0..self.in_ch {
            let xc = &x[c * self.in_h * self.in_w..(c + 1) * self.in_h * self.in_w];
            for ky in 0..self.k_h {
                for kx in 0..self.k_w {
                    let row = ((c * self.k_h + ky) * self.k_w + kx) * plane;
                    let dst = &mut cols[row..row + plane];
                    let (lo, hi) = self.valid_range(kx, self.in_w, self.out_w);
                    for oy in 0..self.out_h {
                        let line = &mut dst[oy * self.out_w..(oy + 1) * self.out_w];
                        let Some(iy) = self.source(oy, ky, self.in_h) else {
                            line.fill(0.0);
                            continue;
                        };
                        line[..lo].fill(0.0);
                        line[hi..].fill(0.0);
                        let base = iy * self.in_w + lo * s + kx - self.pad;
                        let src = &xc[base..];
                        for (i, v) in line[lo..hi].iter_mut().enumerate() {
                            *v = src[i * s];
                        }
                    }
                }
            }
        }
    }

    fn col2im(&self, cols: &[f64], x: &mut [f64]) {
        let plane = self.out_plane();
        let s = self.stride;
        for c in 0..self.in_ch {
            let xc = &mut x[c * self.in_h * self.in_w..(c + 1) * self.in_h * self.in_w];
            for ky in 0..self.k_h {
                for kx in 0..self.k_w {
                    let row = ((c * self.k_h + ky) * self.k_w + kx) * plane;
                    let src = &cols[row..row + plane];
                    let (lo, hi) = self.valid_range(kx, self.in_w, self.out_w);
                    for oy in 0..self.out_h {
                        let Some(iy) = self.source(oy, ky, self.in_h) else {
                            continue;
                        };
                        let line = &src[oy * self.out_w + lo..oy * self.out_w + hi];
                        let base = iy * self.in_w + lo * s + kx - self.pad;
                        let dst = &mut xc[base..];
                        for (i, v) in line.iter().enumerate() {
                            dst[i * s] += v;
                        }
                    }
                }
            }
        }
    }
}

/// Samples per GEMM: enough to give the products about 1024 columns while
/// keeping the patch matrix cache-sized.
const GROUP_COLUMNS: usize = 1024;

impl ConvGeom {
    fn group_size(&self) -> usize {
        (GROUP_COLUMNS / self.out_plane().max(1)).clamp(1, self.batch.max(1))
    }

    /// Patch matrix `(patch_len, G·P)` of samples `first..first + count`.
    fn group_patches(&self, x: &[f64], first: usize, count: usize, per: &mut [f64], cols: &mut [f64]) {
        let (k, plane) = (self.patch_len(), self.out_plane());
        let width = count * plane;
        if count == 1 && !self.is_pointwise() {
            self.im2col(&x[first * self.in_sample()..(first + 1) * self.in_sample()], cols);
            return;
        }
        for i in 0..count {
            let xn = &x[(first + i) * self.in_sample()..(first + i + 1) * self.in_sample()];
            let src: &[f64] = if self.is_pointwise() {
                xn
            } else {
                self.im2col(xn, per);
                per
            };
            for r in 0..k {
                cols[r * width + i * plane..r * width + (i + 1) * plane]
                    .copy_from_slice(&src[r * plane..(r + 1) * plane]);
            }
        }
    }
}

/// `(G, C, P)` slice of a batch → `(C, G·P)`.
fn gather_channels(src: &[f64], ch: usize, plane: usize, first: usize, count: usize, out: &mut [f64]) {
    let width = count * plane;
    for i in 0..count {
        for c in 0..ch {
            let from = ((first + i) * ch + c) * plane;
            out[c * width + i * plane..c * width + (i + 1) * plane].copy_from_slice(&src[from..from + plane]);
        }
    }
}

/// `(C, G·P)` → the `(G, C, P)` slice of a batch.
fn scatter_channels(src: &[f64], ch: usize, plane: usize, first: usize, count: usize, out: &mut [f64]) {
    let width = count * plane;
    for i in 0..count {
        for c in 0..ch {
            let to = ((first + i) * ch + c) * plane;
            out[to..to + plane].copy_from_slice(&src[c * width + i * plane..c * width + (i + 1) * plane]);
        }
    }
}

/// Pointwise convolutions with this few input channels skip GEMM.
const DIRECT_MAX_IN: usize = 4;

pub fn conv2d(g: &ConvGeom, x: &[f64], w: &[f64]) -> Vec<f64> {
    let (k, plane, group) = (g.patch_len(), g.out_plane(), g.group_size());
    let mut out = vec![0.0; g.batch * g.out_ch * plane];
    if g.is_pointwise() && g.in_ch <= DIRECT_MAX_IN {
        for n in 0..g.batch {
            for o in 0..g.out_ch {
                let dst = &mut out[(n * g.out_ch + o) * plane..(n * g.out_ch + o + 1) * plane];
                for c in 0..g.in_ch {
                    let wc = w[o * g.in_ch + c];
                    let src = &x[(n * g.in_ch + c) * plane..(n * g.in_ch + c + 1) * plane];
                    dst.iter_mut().zip(src).for_each(|(d, s)| *d += wc * s);
                }
            }
        }
        return out;
    }
    let mut per = vec![0.0; if g.is_pointwise() { 0 } else { k * plane }];
    let mut cols = vec![0.0; k * group * plane];
    let mut tmp = vec![0.0; g.out_ch * group * plane];
    for first in (0..g.batch).step_by(group) {
        let count = group.min(g.batch - first);
        let width = count * plane;
        g.group_patches(x, first, count, &mut per, &mut cols);
        gemm(g.out_ch, k, width, w, false, &cols[..k * width], false, 0.0, &mut tmp[..g.out_ch * width]);
        scatter_channels(&tmp, g.out_ch, plane, first, count, &mut out);
    }
    out
}

/// Adjoint of [`conv2d`] with respect to its input.
pub fn conv2d_input_grad(g: &ConvGeom, gy: &[f64], w: &[f64]) -> Vec<f64> {
    let (k, plane, group) = (g.patch_len(), g.out_plane(), g.group_size());
    let mut gx = vec![0.0; g.batch * g.in_sample()];
    let mut gys = vec![0.0; g.out_ch * group * plane];
    let mut cols = vec![0.0; k * group * plane];
    let mut per = vec![0.0; k * plane];
    for first in (0..g.batch).step_by(group) {
        let count = group.min(g.batch - first);
        let width = count * plane;
        gather_channels(gy, g.out_ch, plane, first, count, &mut gys);
        gemm(k, g.out_ch, width, w, true, &gys[..g.out_ch * width], false, 0.0, &mut cols[..k * width]);
        if g.is_pointwise() {
            scatter_channels(&cols, k, plane, first, count, &mut gx);
            continue;
        }
        for i in 0..count {
            for r in 0..k {
                per[r * plane..(r + 1) * plane]
                    .copy_from_slice(&cols[r * width + i * plane..r * width + (i + 1) * plane]);
            }
            let n = first + i;
            g.col2im(&per, &mut gx[n * g.in_sample()..(n + 1) * g.in_sample()]);
        }
    }
    gx
}

/// Adjoint of [`conv2d`] with respect to its weights.
pub fn conv2d_weight_grad(g: &ConvGeom, x: &[f64], gy: &[f64]) -> Vec<f64> {
    let (k, plane, group) = (g.patch_len(), g.out_plane(), g.group_size());
    let mut gw = vec![0.0; g.out_ch * k];
    if g.is_pointwise() && g.in_ch <= DIRECT_MAX_IN {
        for n in 0..g.batch {
            for o in 0..g.out_ch {
                let gyo = &gy[(n * g.out_ch + o) * plane..(n * g.out_ch + o + 1) * plane];
                for c in 0..g.in_ch {
                    let xc = &x[(n * g.in_ch + c) * plane..(n * g.in_ch + c + 1) * plane];
                    gw[o * g.in_ch + c] += gyo.iter().zip(xc).map(|(a, b)| a * b).sum::<f64>();
                }
            }
        }
        return gw;
    }
    let mut per = vec![0.0; if g.is_pointwise() { 0 } else { k * plane }];
    let mut cols = vec![0.0; k * group * plane];
    let mut gys = vec![0.0; g.out_ch * group * plane];
    for first in (0..g.batch).step_by(group) {
        let count = group.min(g.batch - first);
        let width = count * plane;
        g.group_patches(x, first, count, &mut per, &mut cols);
        gather_channels(gy, g.out_ch, plane, first, count, &mut gys);
        let beta = if first == 0 { 0.0 } else { 1.0 };
        gemm(g.out_ch, width, k, &gys[..g.out_ch * width], false, &cols[..k * width], true, beta, &mut gw);
    }
    gw
}

/// Nearest-neighbour ×2 upsampling of the two trailing axes.
pub fn upsample2(shape: &[usize], x: &[f64]) -> Vec<f64> {
    let (h, w) = (shape[shape.len() - 2], shape[shape.len() - 1]);
    let planes = x.len() / (h * w);
    let mut out = vec![0.0; x.len() * 4];
    for p in 0..planes {
        let src = &x[p * h * w..(p + 1) * h * w];
        let dst = &mut out[p * 4 * h * w..(p + 1) * 4 * h * w];
        for y in 0..h {
            let row = &src[y * w..(y + 1) * w];
            let (top, bottom) = dst[2 * y * 2 * w..(2 * y + 2) * 2 * w].split_at_mut(2 * w);
            for (xx, &v) in row.iter().enumerate() {
                top[2 * xx] = v;
                top[2 * xx + 1] = v;
            }
            bottom.copy_from_slice(top);
        }
    }
    out
}

/// Sum over non-overlapping 2×2 blocks of the two trailing axes; adjoint of [`upsample2`].
pub fn sum_pool2(shape: &[usize], x: &[f64]) -> Vec<f64> {
    let (h, w) = (shape[shape.len() - 2], shape[shape.len() - 1]);
    let (oh, ow) = (h / 2, w / 2);
    let planes = x.len() / (h * w);
    let mut out = vec![0.0; planes * oh * ow];
    for p in 0..planes {
        let src = &x[p * h * w..(p + 1) * h * w];
        let dst = &mut out[p * oh * ow..(p + 1) * oh * ow];
        for y in 0..oh {
            let r0 = &src[2 * y * w..(2 * y + 1) * w];
            let r1 = &src[(2 * y + 1) * w..(2 * y + 2) * w];
            for xx in 0..ow {
                dst[y * ow + xx] = r0[2 * xx] + r0[2 * xx + 1] + r1[2 * xx] + r1[2 * xx + 1];
            }
        }
    }
    out
}

/// Splits `shape` around `axis` into (outer, len, inner) extents.
pub fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

pub fn sum_axis(shape: &[usize], axis: usize, x: &[f64]) -> Vec<f64> {
    let (outer, n, inner) = axis_split(shape, axis);
    let mut out = vec![0.0; outer * inner];
    for o in 0..outer {
        let dst = &mut out[o * inner..(o + 1) * inner];
        for k in 0..n {
            let src = &x[(o * n + k) * inner..(o * n + k + 1) * inner];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
    }
    out
}

/// Inserts a new axis of length `n` at `axis`, repeating `x` along it.
pub fn expand_axis(shape: &[usize], axis: usize, n: usize, x: &[f64]) -> Vec<f64> {
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis..].iter().product();
    let mut out = Vec::with_capacity(outer * n * inner);
    for o in 0..outer {
        let src = &x[o * inner..(o + 1) * inner];
        for _ in 0..n {
            out.extend_from_slice(src);
        }
    }
    out
}

/// Sums every axis except 1 (the channel axis of NCHW).
pub fn channel_sum(shape: &[usize], x: &[f64]) -> Vec<f64> {
    let (outer, c, inner) = axis_split(shape, 1);
    let mut out = vec![0.0; c];
    for o in 0..outer {
        for (k, acc) in out.iter_mut().enumerate() {
            let start = (o * c + k) * inner;
            *acc += x[start..start + inner].iter().sum::<f64>();
        }
    }
    out
}

/// Broadcasts a per-channel vector to `shape` (channel axis 1).
pub fn channel_broadcast(shape: &[usize], b: &[f64]) -> Vec<f64> {
    let (outer, c, inner) = axis_split(shape, 1);
    let mut out = Vec::with_capacity(outer * c * inner);
    for _ in 0..outer {
        for &v in &b[..c] {
            out.extend(std::iter::repeat_n(v, inner));
        }
    }
    out
}

fn softmax_impl(shape: &[usize], axis: usize, x: &[f64], log: bool) -> Vec<f64> {
    let (outer, n, inner) = axis_split(shape, axis);
    let mut out = vec![0.0; x.len()];
    let mut maxes = vec![0.0; inner];
    let mut sums = vec![0.0; inner];
    for o in 0..outer {
        let base = o * n * inner;
        maxes.fill(f64::NEG_INFINITY);
        for k in 0..n {
            let row = &x[base + k * inner..base + (k + 1) * inner];
            for (m, &v) in maxes.iter_mut().zip(row) {
                *m = m.max(v);
            }
        }
        sums.fill(0.0);
        for k in 0..n {
            let row = &x[base + k * inner..base + (k + 1) * inner];
            let dst = &mut out[base + k * inner..base + (k + 1) * inner];
            for i in 0..inner {
                let e = (row[i] - maxes[i]).exp();
                dst[i] = e;
                sums[i] += e;
            }
        }
        for k in 0..n {
            let row = &x[base + k * inner..base + (k + 1) * inner];
            let dst = &mut out[base + k * inner..base + (k + 1) * inner];
            for i in 0..inner {
                dst[i] = if log {
                    row[i] - maxes[i] - sums[i].ln()
                } else {
                    dst[i] / sums[i]
                };
            }
        }
    }
    out
}

pub fn softmax(shape: &[usize], axis: usize, x: &[f64]) -> Vec<f64> {
    softmax_impl(shape, axis, x, false)
}

pub fn log_softmax(shape: &[usize], axis: usize, x: &[f64]) -> Vec<f64> {
    softmax_impl(shape, axis, x, true)
}

pub fn concat(parts: &[(&[usize], &[f64])], axis: usize) -> Vec<f64> {
    let outer: usize = parts[0].0[..axis].iter().product();
    let total: usize = parts.iter().map(|(s, _)| s.iter().product::<usize>()).sum();
    let mut out = Vec::with_capacity(total);
    for o in 0..outer {
        for (shape, data) in parts {
            let chunk: usize = shape[axis..].iter().product();
            out.extend_from_slice(&data[o * chunk..(o + 1) * chunk]);
        }
    }
    out
}

pub fn slice_axis(shape: &[usize], axis: usize, start: usize, len: usize, x: &[f64]) -> Vec<f64> {
    let (outer, n, inner) = axis_split(shape, axis);
    let mut out = Vec::with_capacity(outer * len * inner);
    for o in 0..outer {
        let from = (o * n + start) * inner;
        out.extend_from_slice(&x[from..from + len * inner]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct seven-loop convolution used as the reference.
    fn conv_reference(g: &ConvGeom, x: &[f64], w: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; g.output_shape().iter().product()];
        for n in 0..g.batch {
            for o in 0..g.out_ch {
                for oy in 0..g.out_h {
                    for ox in 0..g.out_w {
                        let mut acc = 0.0;
                        for c in 0..g.in_ch {
                            for ky in 0..g.k_h {
                                for kx in 0..g.k_w {
                                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                                    let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                                    if iy < 0 || ix < 0 || iy >= g.in_h as isize || ix >= g.in_w as isize {
                                        continue;
                                    }
                                    acc += x[((n * g.in_ch + c) * g.in_h + iy as usize) * g.in_w + ix as usize]
                                        * w[((o * g.in_ch + c) * g.k_h + ky) * g.k_w + kx];
                                }
                            }
                        }
                        out[((n * g.out_ch + o) * g.out_h + oy) * g.out_w + ox] = acc;
                    }
                }
            }
        }
        out
    }

    fn ramp(n: usize, scale: f64) -> Vec<f64> {
        (0..n).map(|i| ((i * 7 % 13) as f64 - 6.0) * scale).collect()
    }

    #[test]
    fn conv_matches_reference_loops() {
        for &(stride, pad, k) in &[(1, 1, 3), (2, 1, 3), (1, 0, 1), (2, 0, 3), (1, 2, 3)] {
            let xs = [2, 3, 7, 6];
            let ws = [4, 3, k, k];
            let g = ConvGeom::new(&xs, &ws, stride, pad).unwrap();
            let x = ramp(xs.iter().product(), 0.1);
            let w = ramp(ws.iter().product(), 0.05);
            let got = conv2d(&g, &x, &w);
            let want = conv_reference(&g, &x, &w);
            for (a, b) in got.iter().zip(&want) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn conv_adjoints_satisfy_inner_product_identity() {
        // <conv(x, w), gy> == <x, dX(gy, w)> == <w, dW(x, gy)>
        let xs = [2, 3, 8, 8];
        let ws = [5, 3, 3, 3];
        let g = ConvGeom::new(&xs, &ws, 2, 1).unwrap();
        let x = ramp(xs.iter().product(), 0.1);
        let w = ramp(ws.iter().product(), 0.03);
        let gy = ramp(g.output_shape().iter().product(), 0.2);
        let y = conv2d(&g, &x, &w);
        let lhs: f64 = y.iter().zip(&gy).map(|(a, b)| a * b).sum();
        let gx = conv2d_input_grad(&g, &gy, &w);
        let mid: f64 = x.iter().zip(&gx).map(|(a, b)| a * b).sum();
        let gw = conv2d_weight_grad(&g, &x, &gy);
        let rhs: f64 = w.iter().zip(&gw).map(|(a, b)| a * b).sum();
        assert!((lhs - mid).abs() < 1e-9 * lhs.abs().max(1.0));
        assert!((lhs - rhs).abs() < 1e-9 * lhs.abs().max(1.0));
    }

    #[test]
    fn all_ones_three_by_three() {
        let g = ConvGeom::new(&[1, 1, 3, 3], &[1, 1, 3, 3], 1, 1).unwrap();
        let y = conv2d(&g, &[1.0; 9], &[1.0; 9]);
        assert_eq!(y[4], 9.0);
        assert_eq!(y[0], 4.0);
    }

    #[test]
    fn upsample_and_pool_are_adjoint() {
        let shape = [1, 2, 3, 4];
        let x = ramp(24, 0.5);
        let up = upsample2(&shape, &x);
        assert_eq!(up.len(), 96);
        assert_eq!(up[0], x[0]);
        assert_eq!(up[1], x[0]);
        assert_eq!(up[8], x[0]);
        let g = ramp(96, 0.25);
        let pooled = sum_pool2(&[1, 2, 6, 8], &g);
        let lhs: f64 = up.iter().zip(&g).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&pooled).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let shape = [2, 3, 2];
        let x = ramp(12, 1.0);
        let s = softmax(&shape, 1, &x);
        for o in 0..2 {
            for i in 0..2 {
                let total: f64 = (0..3).map(|k| s[(o * 3 + k) * 2 + i]).sum();
                assert!((total - 1.0).abs() < 1e-15);
            }
        }
        let ls = log_softmax(&shape, 1, &x);
        for (a, b) in s.iter().zip(&ls) {
            assert!((a.ln() - b).abs() < 1e-12);
        }
    }

    #[test]
    fn gemm_transposes() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]; // 2x3
        let b = [1.0, 0.0, 0.0, 1.0, 1.0, 1.0]; // 3x2
        let mut c = [0.0; 4];
        gemm(2, 3, 2, &a, false, &b, false, 0.0, &mut c);
        assert_eq!(c, [4.0, 5.0, 10.0, 11.0]);
        let at = transpose(2, 3, &a);
        let mut c2 = [0.0; 4];
        gemm(2, 3, 2, &at, true, &b, false, 0.0, &mut c2);
        assert_eq!(c, c2);
    }

    #[test]
    fn concat_then_slice_roundtrip() {
        let a = ramp(2 * 2 * 3, 1.0);
        let b = ramp(2 * 3, 2.0);
        let c = concat(&[(&[2, 2, 3], &a), (&[2, 1, 3], &b)], 1);
        assert_eq!(slice_axis(&[2, 3, 3], 1, 0, 2, &c), a);
        assert_eq!(slice_axis(&[2, 3, 3], 1, 2, 1, &c), b);
    }
}
