//! Per-layer kernels on flat channels-last buffers.

use crate::model::{Activation, Padding};
use crate::scalar::{gemm, Real};

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub batch: usize,
    pub rows: usize,
    pub cols: usize,
    pub cin: usize,
    pub k1: usize,
    pub k2: usize,
    pub out_rows: usize,
    pub out_cols: usize,
    pub pad_top: usize,
    pub pad_left: usize,
}

impl ConvGeom {
    pub fn new(
        batch: usize,
        (rows, cols, cin): (usize, usize, usize),
        (k1, k2): (usize, usize),
        padding: Padding,
    ) -> Self {
        let (out_rows, out_cols, pad_top, pad_left) = match padding {
            Padding::Same => (rows, cols, (k1 - 1) / 2, (k2 - 1) / 2),
            Padding::Valid => (rows - k1 + 1, cols - k2 + 1, 0, 0),
        };
        ConvGeom {
            batch,
            rows,
            cols,
            cin,
            k1,
            k2,
            out_rows,
            out_cols,
            pad_top,
            pad_left,
        }
    }

    /// Rows of the patch matrix: one per output position.
    pub fn patches(&self) -> usize {
        self.batch * self.out_rows * self.out_cols
    }

    /// Columns of the patch matrix, ordered like the kernel's `(k1, k2, I)`.
    pub fn patch_len(&self) -> usize {
        self.k1 * self.k2 * self.cin
    }

    /// Input coordinate of tap `(dy, dx)` for output `(r, c)`, if inside.
    #[inline]
    fn source(&self, r: usize, c: usize, dy: usize, dx: usize) -> Option<(usize, usize)> {
        let y = (r + dy).checked_sub(self.pad_top)?;
        let x = (c + dx).checked_sub(self.pad_left)?;
        (y < self.rows && x < self.cols).then_some((y, x))
    }
}

pub(crate) fn im2col<T: Real>(g: &ConvGeom, input: &[T]) -> Vec<T> {
    let d = g.patch_len();
    let mut cols = vec![T::zero(); g.patches() * d];
    let mut row = 0;
    for b in 0..g.batch {
        let image = &input[b * g.rows * g.cols * g.cin..(b + 1) * g.rows * g.cols * g.cin];
        for r in 0..g.out_rows {
            for c in 0..g.out_cols {
                let dst = &mut cols[row * d..(row + 1) * d];
                for dy in 0..g.k1 {
                    for dx in 0..g.k2 {
                        if let Some((y, x)) = g.source(r, c, dy, dx) {
                            let s = (y * g.cols + x) * g.cin;
                            let t = (dy * g.k2 + dx) * g.cin;
                            dst[t..t + g.cin].copy_from_slice(&image[s..s + g.cin]);
                        }
                    }
                }
                row += 1;
            }
        }
    }
    cols
}

/// Scatter-adds patch gradients back onto the input layout.
pub(crate) fn col2im<T: Real>(g: &ConvGeom, dcols: &[T]) -> Vec<T> {
    let d = g.patch_len();
    let mut dx = vec![T::zero(); g.batch * g.rows * g.cols * g.cin];
    let mut row = 0;
    for b in 0..g.batch {
        let base = b * g.rows * g.cols * g.cin;
        for r in 0..g.out_rows {
            for c in 0..g.out_cols {
                let src = &dcols[row * d..(row + 1) * d];
                for dy in 0..g.k1 {
                    for dxk in 0..g.k2 {
                        if let Some((y, x)) = g.source(r, c, dy, dxk) {
                            let s = base + (y * g.cols + x) * g.cin;
                            let t = (dy * g.k2 + dxk) * g.cin;
                            for ci in 0..g.cin {
                                dx[s + ci] += src[t + ci];
                            }
                        }
                    }
                }
                row += 1;
            }
        }
    }
    dx
}

/// `out[m×h] = x[m×d] · w[d×h] + bias`.
pub(crate) fn affine<T: Real>(x: &[T], w: &[T], bias: &[T], m: usize, d: usize) -> Vec<T> {
    let h = bias.len();
    let mut out = Vec::with_capacity(m * h);
    for _ in 0..m {
        out.extend_from_slice(bias);
    }
    gemm(false, false, m, h, d, x, w, T::one(), &mut out);
    out
}

/// Weight and bias gradients of [`affine`], plus the input gradient when
/// requested.
pub(crate) fn affine_backward<T: Real>(
    x: &[T],
    w: &[T],
    dz: &[T],
    m: usize,
    d: usize,
    h: usize,
    need_dx: bool,
) -> (Vec<T>, Vec<T>, Option<Vec<T>>) {
    let mut dw = vec![T::zero(); d * h];
    gemm(true, false, d, h, m, x, dz, T::zero(), &mut dw);
    let mut db = vec![T::zero(); h];
    for row in dz.chunks_exact(h) {
        for (acc, v) in db.iter_mut().zip(row) {
            *acc += *v;
        }
    }
    let dx = need_dx.then(|| {
        let mut dx = vec![T::zero(); m * d];
        gemm(false, true, m, d, h, dz, w, T::zero(), &mut dx);
        dx
    });
    (dw, db, dx)
}

pub(crate) fn activate<T: Real>(act: Activation, z: &mut [T], width: usize) {
    match act {
        Activation::None => {}
        Activation::Relu => {
            for v in z.iter_mut() {
                if *v < T::zero() {
                    *v = T::zero();
                }
            }
        }
        Activation::Softmax => softmax_rows(z, width),
    }
}

pub(crate) fn softmax_rows<T: Real>(z: &mut [T], width: usize) {
    for row in z.chunks_exact_mut(width) {
        let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

/// Turns `d out` into `d z` in place given the activation output `out`.
pub(crate) fn activate_backward<T: Real>(act: Activation, out: &[T], grad: &mut [T], width: usize) {
    match act {
        Activation::None => {}
        Activation::Relu => {
            for (g, o) in grad.iter_mut().zip(out) {
                if *o <= T::zero() {
                    *g = T::zero();
                }
            }
        }
        Activation::Softmax => {
            for (g, p) in grad.chunks_exact_mut(width).zip(out.chunks_exact(width)) {
                let dot: T = g.iter().zip(p).map(|(a, b)| *a * *b).sum();
                for (gi, pi) in g.iter_mut().zip(p) {
                    *gi = *pi * (*gi - dot);
                }
            }
        }
    }
}

/// 2×2/2 max pooling. Returns the output and, per output element, the flat
/// index of the winning input (first maximum in window order).
pub(crate) fn maxpool<T: Real>(
    input: &[T],
    batch: usize,
    (rows, cols, ch): (usize, usize, usize),
) -> (Vec<T>, Vec<u32>) {
    let (or, oc) = (rows / 2, cols / 2);
    let mut out = Vec::with_capacity(batch * or * oc * ch);
    let mut arg = Vec::with_capacity(out.capacity());
    for b in 0..batch {
        let base = b * rows * cols * ch;
        for r in 0..or {
            for c in 0..oc {
                for k in 0..ch {
                    let mut best = base + ((2 * r) * cols + 2 * c) * ch + k;
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let i = base + ((2 * r + dy) * cols + 2 * c + dx) * ch + k;
                        if input[i] > input[best] {
                            best = i;
                        }
                    }
                    out.push(input[best]);
                    arg.push(best as u32);
                }
            }
        }
    }
    (out, arg)
}

pub(crate) fn maxpool_backward<T: Real>(grad: &[T], arg: &[u32], input_len: usize) -> Vec<T> {
    let mut dx = vec![T::zero(); input_len];
    for (g, &i) in grad.iter().zip(arg) {
        dx[i as usize] += *g;
    }
    dx
}
