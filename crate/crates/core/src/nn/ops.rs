//! Dense kernels over flat row-major buffers.

use super::Real;

/// Dot product with eight independent accumulators so the reduction
/// vectorises without reassociation flags.
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = T::zero();
    for (x, y) in ra.iter().zip(rb) {
        tail += *x * *y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// `y += alpha * x`
pub fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * *xi;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kh: usize,
    pub kw: usize,
    pub h: usize,
    pub w: usize,
}

impl Conv {
    pub fn out_h(&self) -> usize {
        self.h + 1 - self.kh
    }

    pub fn out_w(&self) -> usize {
        self.w + 1 - self.kw
    }

    fn patch_len(&self) -> usize {
        self.in_ch * self.kh * self.kw
    }

    /// One row per output position holding its receptive field, ordered
    /// like the weights of one output map.
    fn im2col<T: Real>(&self, input: &[T]) -> Vec<T> {
        let (oh, ow) = (self.out_h(), self.out_w());
        let pl = self.patch_len();
        let mut cols = vec![T::zero(); oh * ow * pl];
        for y in 0..oh {
            for x in 0..ow {
                let row = &mut cols[(y * ow + x) * pl..][..pl];
                let mut r = 0;
                for c in 0..self.in_ch {
                    for ky in 0..self.kh {
                        let src = &input[(c * self.h + y + ky) * self.w + x..][..self.kw];
                        row[r..r + self.kw].copy_from_slice(src);
                        r += self.kw;
                    }
                }
            }
        }
        cols
    }

    /// Valid cross-correlation; `out` is overwritten.
    pub fn forward<T: Real>(&self, input: &[T], weight: &[T], bias: &[T], out: &mut [T]) {
        let plane = self.out_h() * self.out_w();
        let pl = self.patch_len();
        let cols = self.im2col(input);
        for o in 0..self.out_ch {
            let w = &weight[o * pl..(o + 1) * pl];
            for (pos, v) in out[o * plane..(o + 1) * plane].iter_mut().enumerate() {
                *v = bias[o] + dot(w, &cols[pos * pl..(pos + 1) * pl]);
            }
        }
    }

    /// Accumulates weight and bias gradients, and the input gradient when
    /// `d_input` is given.
    pub fn backward<T: Real>(
        &self,
        input: &[T],
        weight: &[T],
        d_out: &[T],
        d_weight: &mut [T],
        d_bias: &mut [T],
        d_input: Option<&mut [T]>,
    ) {
        let (oh, ow) = (self.out_h(), self.out_w());
        let plane = oh * ow;
        let pl = self.patch_len();
        let cols = self.im2col(input);
        let mut d_cols = d_input.as_ref().map(|_| vec![T::zero(); cols.len()]);
        for o in 0..self.out_ch {
            let g = &d_out[o * plane..(o + 1) * plane];
            d_bias[o] += g.iter().copied().sum::<T>();
            let w = &weight[o * pl..(o + 1) * pl];
            let dw = &mut d_weight[o * pl..(o + 1) * pl];
            for (pos, &gv) in g.iter().enumerate() {
                if gv == T::zero() {
                    continue;
                }
                axpy(gv, &cols[pos * pl..(pos + 1) * pl], dw);
                if let Some(dc) = d_cols.as_mut() {
                    axpy(gv, w, &mut dc[pos * pl..(pos + 1) * pl]);
                }
            }
        }
        if let (Some(di), Some(dc)) = (d_input, d_cols) {
            for y in 0..oh {
                for x in 0..ow {
                    let row = &dc[(y * ow + x) * pl..][..pl];
                    let mut r = 0;
                    for c in 0..self.in_ch {
                        for ky in 0..self.kh {
                            let dst = &mut di[(c * self.h + y + ky) * self.w + x..][..self.kw];
                            for (d, v) in dst.iter_mut().zip(&row[r..r + self.kw]) {
                                *d += *v;
                            }
                            r += self.kw;
                        }
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pool {
    pub ch: usize,
    pub ph: usize,
    pub pw: usize,
    pub h: usize,
    pub w: usize,
}

impl Pool {
    /// Trailing rows/columns that do not fill a window are dropped.
    pub fn out_h(&self) -> usize {
        self.h / self.ph
    }

    pub fn out_w(&self) -> usize {
        self.w / self.pw
    }

    /// Max pooling; `argmax` receives the flat input index of every output.
    /// Ties go to the first element in row-major window order.
    pub fn forward<T: Real>(&self, input: &[T], out: &mut [T], argmax: &mut [u32]) {
        let (oh, ow) = (self.out_h(), self.out_w());
        for c in 0..self.ch {
            for y in 0..oh {
                for x in 0..ow {
                    let mut best = usize::MAX;
                    let mut best_v = T::neg_infinity();
                    for dy in 0..self.ph {
                        for dx in 0..self.pw {
                            let idx = (c * self.h + y * self.ph + dy) * self.w + x * self.pw + dx;
                            if input[idx] > best_v {
                                best_v = input[idx];
                                best = idx;
                            }
                        }
                    }
                    let o = (c * oh + y) * ow + x;
                    out[o] = best_v;
                    argmax[o] = best as u32;
                }
            }
        }
    }

    pub fn backward<T: Real>(d_out: &[T], argmax: &[u32], d_input: &mut [T]) {
        for (g, &idx) in d_out.iter().zip(argmax) {
            d_input[idx as usize] += *g;
        }
    }
}

/// `out = W x + b` with `W` stored `[out, in]`.
pub fn dense_forward<T: Real>(weight: &[T], bias: &[T], x: &[T], out: &mut [T]) {
    let n_in = x.len();
    for (j, o) in out.iter_mut().enumerate() {
        *o = bias[j] + dot(&weight[j * n_in..(j + 1) * n_in], x);
    }
}

pub fn dense_backward<T: Real>(
    weight: &[T],
    x: &[T],
    d_out: &[T],
    d_weight: &mut [T],
    d_bias: &mut [T],
    d_x: Option<&mut [T]>,
) {
    let n_in = x.len();
    for (j, &g) in d_out.iter().enumerate() {
        if g == T::zero() {
            continue;
        }
        d_bias[j] += g;
        axpy(g, x, &mut d_weight[j * n_in..(j + 1) * n_in]);
    }
    if let Some(dx) = d_x {
        for (j, &g) in d_out.iter().enumerate() {
            if g != T::zero() {
                axpy(g, &weight[j * n_in..(j + 1) * n_in], dx);
            }
        }
    }
}

pub fn relu_inplace<T: Real>(x: &mut [T]) {
    for v in x {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

/// Zeroes gradient entries whose activation was clipped by ReLU.
pub fn relu_mask<T: Real>(activation: &[T], grad: &mut [T]) {
    for (g, a) in grad.iter_mut().zip(activation) {
        if *a <= T::zero() {
            *g = T::zero();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_matches_naive() {
        let a: Vec<f64> = (0..37).map(|i| i as f64 * 0.5).collect();
        let b: Vec<f64> = (0..37).map(|i| 1.0 - i as f64 * 0.1).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-9);
    }

    #[test]
    fn conv_known_values() {
        // single 3x3 input, 2x2 kernel of ones
        let c = Conv {
            in_ch: 1,
            out_ch: 1,
            kh: 2,
            kw: 2,
            h: 3,
            w: 3,
        };
        let input: Vec<f64> = (1..=9).map(|v| v as f64).collect();
        let mut out = vec![0.0; 4];
        c.forward(&input, &[1.0; 4], &[0.5], &mut out);
        assert_eq!(out, vec![12.5, 16.5, 24.5, 28.5]);
    }

    #[test]
    fn pool_odd_extent_floors() {
        let p = Pool {
            ch: 1,
            ph: 2,
            pw: 2,
            h: 3,
            w: 5,
        };
        assert_eq!((p.out_h(), p.out_w()), (1, 2));
        let input: Vec<f64> = (0..15).map(|v| v as f64).collect();
        let mut out = vec![0.0; 2];
        let mut arg = vec![0; 2];
        p.forward(&input, &mut out, &mut arg);
        assert_eq!(out, vec![6.0, 8.0]);
        assert_eq!(arg, vec![6, 8]);
    }
}
