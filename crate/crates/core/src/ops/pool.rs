//! Non-overlapping 2x2 max pooling, stride 2, floor semantics.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Argmax bookkeeping from a forward pass, consumed by the backward pass.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PoolIndices {
    pub input_shape: [usize; 4],
    /// Flat index into the input for every output element.
    pub argmax: Vec<u32>,
}

/// Returns the pooled tensor `[N, C, H/2, W/2]` and the argmax of every window.
/// Ties go to the smallest flat index; a trailing odd row/column is dropped.
pub fn maxpool2x2_forward<T: Scalar>(input: &Tensor<T>) -> Result<(Tensor<T>, PoolIndices)> {
    let [n, c, h, w] = input.dims4("maxpool2x2_forward")?;
    if h < 2 || w < 2 {
        return Err(Error::InvalidArgument(format!(
            "maxpool2x2_forward: spatial dims must be >= 2, got {h}x{w}"
        )));
    }
    let (oh, ow) = (h / 2, w / 2);
    let x = input.data();
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut argmax = Vec::with_capacity(n * c * oh * ow);
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let top = base + 2 * oy * w + 2 * ox;
                let mut best = top;
                for idx in [top + 1, top + w, top + w + 1] {
                    // strict comparison keeps the earliest index on ties
                    if x[idx] > x[best] {
                        best = idx;
                    }
                }
                out.push(x[best]);
                argmax.push(best as u32);
            }
        }
    }
    Ok((
        Tensor::new(&[n, c, oh, ow], out)?,
        PoolIndices {
            input_shape: [n, c, h, w],
            argmax,
        },
    ))
}

pub fn maxpool2x2_backward<T: Scalar>(indices: &PoolIndices, out_grad: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, c, h, w] = indices.input_shape;
    out_grad.ensure_shape("maxpool2x2_backward", "out_grad", &[n, c, h / 2, w / 2])?;
    if indices.argmax.len() != out_grad.len() {
        return Err(Error::shape(
            "maxpool2x2_backward",
            "argmax count",
            out_grad.len(),
            indices.argmax.len(),
        ));
    }
    let mut grad = vec![T::zero(); n * c * h * w];
    for (&idx, &g) in indices.argmax.iter().zip(out_grad.data()) {
        let slot = grad
            .get_mut(idx as usize)
            .ok_or_else(|| Error::InvalidArgument(format!("argmax index {idx} out of range")))?;
        *slot += g;
    }
    Tensor::new(&indices.input_shape, grad)
}
