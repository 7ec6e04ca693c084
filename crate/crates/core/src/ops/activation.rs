use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub fn relu<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|x| if x > T::zero() { x } else { T::zero() })
}

/// Passes gradient where `input > 0`; the subgradient at exactly 0 is 0.
pub fn relu_backward<T: Scalar>(input: &Tensor<T>, out_grad: &Tensor<T>) -> Result<Tensor<T>> {
    out_grad.ensure_shape("relu_backward", "out_grad", input.shape())?;
    let data = input
        .data()
        .iter()
        .zip(out_grad.data())
        .map(|(&x, &g)| if x > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::new(input.shape(), data)
}

/// Logistic function, evaluated without overflow for large `|x|`.
#[inline]
pub fn sigmoid_scalar<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub fn sigmoid<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    input.map(sigmoid_scalar)
}

/// Backward through sigmoid given its *output*.
pub fn sigmoid_backward<T: Scalar>(output: &Tensor<T>, out_grad: &Tensor<T>) -> Result<Tensor<T>> {
    out_grad.ensure_shape("sigmoid_backward", "out_grad", output.shape())?;
    let data = output
        .data()
        .iter()
        .zip(out_grad.data())
        .map(|(&s, &g)| g * s * (T::one() - s))
        .collect();
    Tensor::new(output.shape(), data)
}

/// In-place softmax of one slice with max subtraction.
pub(crate) fn softmax_slice<T: Scalar>(z: &mut [T]) {
    let max = z.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

/// Softmax along the last axis.
pub fn softmax<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    let k = *input.shape().last().expect("tensor rank >= 1");
    let mut out = input.clone();
    out.data_mut().chunks_mut(k).for_each(softmax_slice);
    out
}

pub(crate) fn softmax_backward_slice<T: Scalar>(s: &[T], g: &[T], dz: &mut [T]) {
    let dot: T = s.iter().zip(g).map(|(&a, &b)| a * b).sum();
    for ((d, &si), &gi) in dz.iter_mut().zip(s).zip(g) {
        *d = si * (gi - dot);
    }
}

/// Backward through softmax (last axis) given its *output*.
pub fn softmax_backward<T: Scalar>(output: &Tensor<T>, out_grad: &Tensor<T>) -> Result<Tensor<T>> {
    out_grad.ensure_shape("softmax_backward", "out_grad", output.shape())?;
    let k = *output.shape().last().expect("tensor rank >= 1");
    let mut dz = vec![T::zero(); output.len()];
    for ((s, g), d) in output
        .data()
        .chunks(k)
        .zip(out_grad.data().chunks(k))
        .zip(dz.chunks_mut(k))
    {
        softmax_backward_slice(s, g, d);
    }
    Tensor::new(output.shape(), dz)
}
