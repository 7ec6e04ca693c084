//! Stride-1 "same" 2-D convolution via im2col + GEMM.
//!
//! Layout is N,C,H,W for activations and K,C,kh,kw for kernels. Work is split
//! per image; weight gradients are reduced over images in index order so the
//! result does not depend on the rayon thread count.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::{gemm, Mat, Scalar};
use crate::tensor::{LayerGrads, Tensor};

const OP_FWD: &str = "conv2d_forward";
const OP_BWD: &str = "conv2d_backward";

#[derive(Clone, Copy, Debug)]
struct Geometry {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    kh: usize,
    kw: usize,
}

impl Geometry {
    fn patch(&self) -> usize {
        self.c * self.kh * self.kw
    }
    fn plane(&self) -> usize {
        self.h * self.w
    }
}

fn geometry<T: Scalar>(
    op: &'static str,
    input: &Tensor<T>,
    kernels: &Tensor<T>,
) -> Result<Geometry> {
    let [n, c, h, w] = input.dims4(op)?;
    let [k, kc, kh, kw] = kernels.dims4(op)?;
    if kc != c {
        return Err(Error::shape(op, "kernel input channels (C)", c, kc));
    }
    if kh % 2 == 0 || kw % 2 == 0 {
        return Err(Error::InvalidArgument(format!(
            "{op}: kernel extents must be odd for same padding, got {kh}x{kw}"
        )));
    }
    Ok(Geometry {
        n,
        c,
        h,
        w,
        k,
        kh,
        kw,
    })
}

/// Unfolds one C,H,W image into a `(C*kh*kw) x (H*W)` patch matrix with zero fill.
fn im2col<T: Scalar>(g: &Geometry, image: &[T], col: &mut [T]) {
    let (ph, pw) = (g.kh / 2, g.kw / 2);
    let plane = g.plane();
    let mut row = 0;
    for c in 0..g.c {
        let src = &image[c * plane..(c + 1) * plane];
        for dy in 0..g.kh {
            for dx in 0..g.kw {
                let dst = &mut col[row * plane..(row + 1) * plane];
                // Source column for output x is x + dx - pw.
                let x_lo = pw.saturating_sub(dx);
                let x_hi = (g.w + pw).saturating_sub(dx).min(g.w);
                for y in 0..g.h {
                    let out = &mut dst[y * g.w..(y + 1) * g.w];
                    let sy = y as isize + dy as isize - ph as isize;
                    if sy < 0 || sy >= g.h as isize || x_lo >= x_hi {
                        out.fill(T::zero());
                        continue;
                    }
                    let sy = sy as usize;
                    out[..x_lo].fill(T::zero());
                    out[x_hi..].fill(T::zero());
                    let s0 = sy * g.w + x_lo + dx - pw;
                    out[x_lo..x_hi].copy_from_slice(&src[s0..s0 + (x_hi - x_lo)]);
                }
                row += 1;
            }
        }
    }
}

/// Folds a patch-matrix gradient back onto the image it was unfolded from.
fn col2im<T: Scalar>(g: &Geometry, col: &[T], image: &mut [T]) {
    let (ph, pw) = (g.kh / 2, g.kw / 2);
    let plane = g.plane();
    image.fill(T::zero());
    let mut row = 0;
    for c in 0..g.c {
        let dst = &mut image[c * plane..(c + 1) * plane];
        for dy in 0..g.kh {
            for dx in 0..g.kw {
                let src = &col[row * plane..(row + 1) * plane];
                let x_lo = pw.saturating_sub(dx);
                let x_hi = (g.w + pw).saturating_sub(dx).min(g.w);
                for y in 0..g.h {
                    let sy = y as isize + dy as isize - ph as isize;
                    if sy < 0 || sy >= g.h as isize || x_lo >= x_hi {
                        continue;
                    }
                    let d0 = sy as usize * g.w + x_lo + dx - pw;
                    let d = &mut dst[d0..d0 + (x_hi - x_lo)];
                    for (o, &v) in d.iter_mut().zip(&src[y * g.w + x_lo..y * g.w + x_hi]) {
                        *o += v;
                    }
                }
                row += 1;
            }
        }
    }
}

/// Same-padded stride-1 convolution: `[N,C,H,W] * [K,C,kh,kw] + bias[K] -> [N,K,H,W]`.
pub fn conv2d_forward<T: Scalar>(
    input: &Tensor<T>,
    kernels: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>> {
    let g = geometry(OP_FWD, input, kernels)?;
    bias.ensure_shape(OP_FWD, "bias length (K)", &[g.k])?;

    let (plane, patch) = (g.plane(), g.patch());
    let in_len = g.c * plane;
    let out_len = g.k * plane;
    let mut out = vec![T::zero(); g.n * out_len];
    let kmat = Mat::new(kernels.data(), g.k, patch);

    out.par_chunks_mut(out_len)
        .zip(input.data().par_chunks(in_len))
        .for_each_init(
            || vec![T::zero(); patch * plane],
            |col, (dst, src)| {
                im2col(&g, src, col);
                for (row, &b) in dst.chunks_mut(plane).zip(bias.data()) {
                    row.fill(b);
                }
                gemm(kmat, Mat::new(col, patch, plane), T::one(), dst);
            },
        );
    Tensor::new(&[g.n, g.k, g.h, g.w], out)
}

/// Gradients for [`conv2d_forward`]: `[d input, d kernels, d bias]`.
pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    kernels: &Tensor<T>,
    out_grad: &Tensor<T>,
) -> Result<LayerGrads<T>> {
    conv2d_backward_with(input, kernels, out_grad, true)
}

/// As [`conv2d_backward`]; skips the input gradient when `need_input_grad` is false
/// (first layer of a network).
pub fn conv2d_backward_with<T: Scalar>(
    input: &Tensor<T>,
    kernels: &Tensor<T>,
    out_grad: &Tensor<T>,
    need_input_grad: bool,
) -> Result<LayerGrads<T>> {
    let g = geometry(OP_BWD, input, kernels)?;
    out_grad.ensure_shape(OP_BWD, "out_grad (N,K,H,W)", &[g.n, g.k, g.h, g.w])?;

    let (plane, patch) = (g.plane(), g.patch());
    let in_len = g.c * plane;
    let out_len = g.k * plane;
    let kmat = Mat::new(kernels.data(), g.k, patch);

    let mut input_grad = need_input_grad.then(|| vec![T::zero(); g.n * in_len]);
    let mut partial_dk = vec![T::zero(); g.n * g.k * patch];

    let per_image = |col: &mut Vec<T>, dcol: &mut Vec<T>, n: usize, dk: &mut [T], din: Option<&mut [T]>| {
        let x = &input.data()[n * in_len..(n + 1) * in_len];
        let dy = &out_grad.data()[n * out_len..(n + 1) * out_len];
        im2col(&g, x, col);
        // dK_n = dY_n (K x HW) * col^T (HW x patch)
        gemm(
            Mat::new(dy, g.k, plane),
            Mat::new(col, patch, plane).t(),
            T::zero(),
            dk,
        );
        if let Some(din) = din {
            // dcol = K^T (patch x K) * dY_n (K x HW)
            gemm(kmat.t(), Mat::new(dy, g.k, plane), T::zero(), dcol);
            col2im(&g, dcol, din);
        }
    };

    let init = || (vec![T::zero(); patch * plane], vec![T::zero(); patch * plane]);
    match input_grad.as_mut() {
        Some(din) => partial_dk
            .par_chunks_mut(g.k * patch)
            .zip(din.par_chunks_mut(in_len))
            .enumerate()
            .for_each_init(init, |(col, dcol), (n, (dk, di))| {
                per_image(col, dcol, n, dk, Some(di))
            }),
        None => partial_dk
            .par_chunks_mut(g.k * patch)
            .enumerate()
            .for_each_init(init, |(col, dcol), (n, dk)| per_image(col, dcol, n, dk, None)),
    }

    let mut dk = vec![T::zero(); g.k * patch];
    for part in partial_dk.chunks(g.k * patch) {
        for (a, &b) in dk.iter_mut().zip(part) {
            *a += b;
        }
    }
    let mut db = vec![T::zero(); g.k];
    for image in out_grad.data().chunks(out_len) {
        for (b, row) in db.iter_mut().zip(image.chunks(plane)) {
            *b += row.iter().copied().sum::<T>();
        }
    }

    Ok(LayerGrads {
        input_grad: input_grad
            .map(|d| Tensor::new(&[g.n, g.c, g.h, g.w], d))
            .transpose()?,
        param_grads: vec![
            Tensor::new(&[g.k, g.c, g.kh, g.kw], dk)?,
            Tensor::new(&[g.k], db)?,
        ],
    })
}
