//! Fully connected layer: `[N, F] x [F, U] + bias[U]`.

use crate::error::{Error, Result};
use crate::scalar::{gemm, Mat, Scalar};
use crate::tensor::{LayerGrads, Tensor};

fn dims<T: Scalar>(op: &'static str, input: &Tensor<T>, weights: &Tensor<T>) -> Result<(usize, usize, usize)> {
    let [n, f] = input.dims2(op)?;
    let [wf, u] = weights.dims2(op)?;
    if wf != f {
        return Err(Error::shape(op, "weights rows (input features F)", f, wf));
    }
    Ok((n, f, u))
}

pub fn dense_forward<T: Scalar>(input: &Tensor<T>, weights: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, f, u) = dims("dense_forward", input, weights)?;
    bias.ensure_shape("dense_forward", "bias length (U)", &[u])?;
    let mut out = Vec::with_capacity(n * u);
    for _ in 0..n {
        out.extend_from_slice(bias.data());
    }
    gemm(
        Mat::new(input.data(), n, f),
        Mat::new(weights.data(), f, u),
        T::one(),
        &mut out,
    );
    Tensor::new(&[n, u], out)
}

/// Gradients `[d weights, d bias]` plus the input gradient.
pub fn dense_backward<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    out_grad: &Tensor<T>,
) -> Result<LayerGrads<T>> {
    let (n, f, u) = dims("dense_backward", input, weights)?;
    out_grad.ensure_shape("dense_backward", "out_grad (N,U)", &[n, u])?;
    let dy = Mat::new(out_grad.data(), n, u);

    let mut dx = vec![T::zero(); n * f];
    gemm(dy, Mat::new(weights.data(), f, u).t(), T::zero(), &mut dx);
    let mut dw = vec![T::zero(); f * u];
    gemm(Mat::new(input.data(), n, f).t(), dy, T::zero(), &mut dw);
    let mut db = vec![T::zero(); u];
    for row in out_grad.data().chunks(u) {
        for (b, &g) in db.iter_mut().zip(row) {
            *b += g;
        }
    }
    Ok(LayerGrads {
        input_grad: Some(Tensor::new(&[n, f], dx)?),
        param_grads: vec![Tensor::new(&[f, u], dw)?, Tensor::new(&[u], db)?],
    })
}
