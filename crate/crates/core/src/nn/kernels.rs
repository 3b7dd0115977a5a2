//! Forward/backward kernels on raw channel-first buffers.

use crate::real::{gemm, MatView, Real};

/// Unfolds a `[c, h, w]` image into `(c*k*k) x (h*w)` patch columns with zero
/// padding `k / 2` ("same" output size).
pub(super) fn im2col<T: Real>(x: &[T], c: usize, h: usize, w: usize, k: usize, cols: &mut [T]) {
    let p = k / 2;
    let hw = h * w;
    debug_assert_eq!(cols.len(), c * k * k * hw);
    for ci in 0..c {
        let plane = &x[ci * hw..(ci + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let dst = &mut cols[row * hw..(row + 1) * hw];
                let x_lo = p.saturating_sub(kx);
                let x_hi = (w + p).saturating_sub(kx).min(w);
                for y in 0..h {
                    let out = &mut dst[y * w..(y + 1) * w];
                    let sy = y + ky;
                    if sy < p || sy - p >= h || x_lo >= x_hi {
                        out.iter_mut().for_each(|v| *v = T::zero());
                        continue;
                    }
                    let src = &plane[(sy - p) * w..(sy - p + 1) * w];
                    out[..x_lo].iter_mut().for_each(|v| *v = T::zero());
                    out[x_hi..].iter_mut().for_each(|v| *v = T::zero());
                    out[x_lo..x_hi].copy_from_slice(&src[x_lo + kx - p..x_hi + kx - p]);
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: folds patch columns back, accumulating into `gx`.
pub(super) fn col2im<T: Real>(cols: &[T], c: usize, h: usize, w: usize, k: usize, gx: &mut [T]) {
    let p = k / 2;
    let hw = h * w;
    for ci in 0..c {
        let plane = &mut gx[ci * hw..(ci + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let src = &cols[row * hw..(row + 1) * hw];
                let x_lo = p.saturating_sub(kx);
                let x_hi = (w + p).saturating_sub(kx).min(w);
                if x_lo >= x_hi {
                    continue;
                }
                for y in 0..h {
                    let sy = y + ky;
                    if sy < p || sy - p >= h {
                        continue;
                    }
                    let dst = &mut plane[(sy - p) * w..(sy - p + 1) * w];
                    let s = &src[y * w..(y + 1) * w];
                    for (d, &v) in dst[x_lo + kx - p..x_hi + kx - p].iter_mut().zip(&s[x_lo..x_hi]) {
                        *d += v;
                    }
                }
            }
        }
    }
}

pub(super) struct ConvShape {
    pub cin: usize,
    pub cout: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
}

impl ConvShape {
    fn patch(&self) -> usize {
        self.cin * self.k * self.k
    }
}

fn patch_columns<'a, T: Real>(x: &'a [T], s: &ConvShape, buf: &'a mut Vec<T>) -> &'a [T] {
    if s.k == 1 {
        return x;
    }
    buf.resize(s.patch() * s.h * s.w, T::zero());
    im2col(x, s.cin, s.h, s.w, s.k, buf);
    buf
}

pub(super) fn conv2d_forward<T: Real>(x: &[T], weight: &[T], bias: &[T], s: &ConvShape) -> Vec<T> {
    let hw = s.h * s.w;
    let mut buf = Vec::new();
    let cols = patch_columns(x, s, &mut buf);
    let mut out = vec![T::zero(); s.cout * hw];
    for (co, plane) in out.chunks_mut(hw).enumerate() {
        plane.iter_mut().for_each(|v| *v = bias[co]);
    }
    gemm(
        weight,
        MatView::row_major(s.cout, s.patch()),
        cols,
        MatView::row_major(s.patch(), hw),
        T::one(),
        &mut out,
        MatView::row_major(s.cout, hw),
    );
    out
}

/// Returns `(grad_x, grad_weight, grad_bias)`; `grad_x` is skipped when not needed.
pub(super) fn conv2d_backward<T: Real>(
    x: &[T],
    weight: &[T],
    gout: &[T],
    s: &ConvShape,
    need_gx: bool,
    need_gw: bool,
) -> (Option<Vec<T>>, Option<Vec<T>>, Option<Vec<T>>) {
    let hw = s.h * s.w;
    let patch = s.patch();
    let (gw, gb) = if need_gw {
        let mut buf = Vec::new();
        let cols = patch_columns(x, s, &mut buf);
        let mut gw = vec![T::zero(); s.cout * patch];
        gemm(
            gout,
            MatView::row_major(s.cout, hw),
            cols,
            MatView::row_major(patch, hw).t(),
            T::zero(),
            &mut gw,
            MatView::row_major(s.cout, patch),
        );
        let gb = gout.chunks(hw).map(|plane| plane.iter().copied().sum()).collect();
        (Some(gw), Some(gb))
    } else {
        (None, None)
    };
    let gx = need_gx.then(|| {
        let mut gcols = vec![T::zero(); patch * hw];
        gemm(
            weight,
            MatView::row_major(s.cout, patch).t(),
            gout,
            MatView::row_major(s.cout, hw),
            T::zero(),
            &mut gcols,
            MatView::row_major(patch, hw),
        );
        if s.k == 1 {
            gcols
        } else {
            let mut gx = vec![T::zero(); s.cin * hw];
            col2im(&gcols, s.cin, s.h, s.w, s.k, &mut gx);
            gx
        }
    });
    (gx, gw, gb)
}

/// 2x2 max pooling with stride 2; returns values and the flat input index of each max.
pub(super) fn maxpool2_forward<T: Real>(x: &[T], c: usize, h: usize, w: usize) -> (Vec<T>, Vec<u32>) {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut idx = Vec::with_capacity(c * oh * ow);
    for ci in 0..c {
        let base = ci * h * w;
        for y in 0..oh {
            for xx in 0..ow {
                let mut best = base + 2 * y * w + 2 * xx;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let j = base + (2 * y + dy) * w + 2 * xx + dx;
                    if x[j] > x[best] {
                        best = j;
                    }
                }
                out.push(x[best]);
                idx.push(best as u32);
            }
        }
    }
    (out, idx)
}

pub(super) fn upsample2_forward<T: Real>(x: &[T], c: usize, h: usize, w: usize) -> Vec<T> {
    let (oh, ow) = (2 * h, 2 * w);
    let mut out = vec![T::zero(); c * oh * ow];
    for ci in 0..c {
        for y in 0..oh {
            let src = &x[ci * h * w + (y / 2) * w..ci * h * w + (y / 2 + 1) * w];
            let dst = &mut out[ci * oh * ow + y * ow..ci * oh * ow + (y + 1) * ow];
            for (xx, d) in dst.iter_mut().enumerate() {
                *d = src[xx / 2];
            }
        }
    }
    out
}

pub(super) fn upsample2_backward<T: Real>(g: &[T], c: usize, h: usize, w: usize) -> Vec<T> {
    let (oh, ow) = (2 * h, 2 * w);
    let mut gx = vec![T::zero(); c * h * w];
    for ci in 0..c {
        for y in 0..oh {
            for xx in 0..ow {
                gx[ci * h * w + (y / 2) * w + xx / 2] += g[ci * oh * ow + y * ow + xx];
            }
        }
    }
    gx
}

#[inline]
pub(super) fn reflect(i: usize, n: usize) -> usize {
    if i < n {
        i
    } else {
        2 * (n - 1) - i
    }
}

/// Channel-wise softmax at every pixel.
pub(super) fn softmax_channels<T: Real>(x: &[T], c: usize, hw: usize) -> Vec<T> {
    let mut out = vec![T::zero(); c * hw];
    for p in 0..hw {
        let mut m = x[p];
        for ci in 1..c {
            m = m.max(x[ci * hw + p]);
        }
        let mut sum = T::zero();
        for ci in 0..c {
            let e = (x[ci * hw + p] - m).exp();
            out[ci * hw + p] = e;
            sum += e;
        }
        for ci in 0..c {
            out[ci * hw + p] /= sum;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_conv(x: &[f64], wgt: &[f64], b: &[f64], s: &ConvShape) -> Vec<f64> {
        let p = (s.k / 2) as isize;
        let mut out = vec![0.0; s.cout * s.h * s.w];
        for co in 0..s.cout {
            for y in 0..s.h {
                for xx in 0..s.w {
                    let mut acc = b[co];
                    for ci in 0..s.cin {
                        for ky in 0..s.k {
                            for kx in 0..s.k {
                                let sy = y as isize + ky as isize - p;
                                let sx = xx as isize + kx as isize - p;
                                if sy < 0 || sx < 0 || sy >= s.h as isize || sx >= s.w as isize {
                                    continue;
                                }
                                acc += wgt[((co * s.cin + ci) * s.k + ky) * s.k + kx]
                                    * x[ci * s.h * s.w + sy as usize * s.w + sx as usize];
                            }
                        }
                    }
                    out[co * s.h * s.w + y * s.w + xx] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_direct_summation() {
        for &(cin, cout, h, w, k) in &[(2, 3, 5, 7, 3), (3, 2, 4, 4, 1), (1, 1, 2, 3, 3), (2, 2, 6, 5, 5)] {
            let s = ConvShape { cin, cout, h, w, k };
            let x: Vec<f64> = (0..cin * h * w).map(|i| ((i * 37 % 11) as f64 - 5.0) / 3.0).collect();
            let wgt: Vec<f64> = (0..cout * cin * k * k).map(|i| ((i * 13 % 7) as f64 - 3.0) / 5.0).collect();
            let b: Vec<f64> = (0..cout).map(|i| i as f64 * 0.1).collect();
            let fast = conv2d_forward(&x, &wgt, &b, &s);
            let slow = naive_conv(&x, &wgt, &b, &s);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        let (c, h, w, k) = (2, 4, 5, 3);
        let x: Vec<f64> = (0..c * h * w).map(|i| (i as f64 * 0.37).sin()).collect();
        let g: Vec<f64> = (0..c * k * k * h * w).map(|i| (i as f64 * 0.11).cos()).collect();
        let mut cols = vec![0.0; g.len()];
        im2col(&x, c, h, w, k, &mut cols);
        let mut back = vec![0.0; x.len()];
        col2im(&g, c, h, w, k, &mut back);
        let lhs: f64 = cols.iter().zip(&g).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn softmax_sums_to_one() {
        let x: Vec<f64> = (0..4 * 6).map(|i| (i as f64 * 1.7).sin() * 30.0).collect();
        let s = softmax_channels(&x, 4, 6);
        for p in 0..6 {
            let sum: f64 = (0..4).map(|c| s[c * 6 + p]).sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn reflect_indices() {
        assert_eq!(reflect(3, 5), 3);
        assert_eq!(reflect(5, 5), 3);
        assert_eq!(reflect(7, 5), 1);
    }
}
