//! Label strings to and from target vectors / network outputs.

use super::config::HeadMethod;
use crate::captcha::Charset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct LabelCodec {
    pub charset: Charset,
    pub length: usize,
    pub method: HeadMethod,
}

/// A decoded label with the winning score at each position.
#[derive(Clone, Debug, PartialEq)]
pub struct Decoded<T> {
    pub label: String,
    pub indices: Vec<usize>,
    pub confidence: Vec<T>,
}

impl LabelCodec {
    pub fn new(charset: Charset, length: usize, method: HeadMethod) -> Self {
        Self { charset, length, method }
    }

    pub fn classes(&self) -> usize {
        self.charset.len()
    }

    pub fn width(&self) -> usize {
        self.length * self.classes()
    }

    /// Symbol indices of `label`, checked against length and charset.
    pub fn indices(&self, label: &str) -> Result<Vec<usize>> {
        let n = label.chars().count();
        if n != self.length {
            return Err(Error::LabelLength {
                label: label.to_string(),
                expected: self.length,
                actual: n,
            });
        }
        self.charset.indices(label)
    }

    /// Writes the 0/1 target for `indices` into `dst` (length `L*D`).
    pub fn fill_target<T: Scalar>(&self, indices: &[usize], dst: &mut [T]) {
        let d = self.classes();
        dst.fill(T::zero());
        for (p, &i) in indices.iter().enumerate() {
            dst[p * d + i] = T::one();
        }
    }

    /// Target tensor: `[L, D]` one-hot rows for the softmax head, a flat
    /// `[L*D]` vector for the sigmoid head. Either way position `p`, symbol
    /// `i` is flat index `p*D + i`.
    pub fn encode<T: Scalar>(&self, label: &str) -> Result<Tensor<T>> {
        let idx = self.indices(label)?;
        let mut data = vec![T::zero(); self.width()];
        self.fill_target(&idx, &mut data);
        match self.method {
            HeadMethod::Softmax => Tensor::new(&[self.length, self.classes()], data),
            HeadMethod::Sigmoid => Tensor::new(&[self.width()], data),
        }
    }

    /// Per-position argmax of one `L*D` score row; ties go to the smallest
    /// index.
    pub fn decode_row<T: Scalar>(&self, scores: &[T]) -> Result<Decoded<T>> {
        if scores.len() != self.width() {
            return Err(Error::shape("decode", "output width", self.width(), scores.len()));
        }
        let d = self.classes();
        let mut indices = Vec::with_capacity(self.length);
        let mut confidence = Vec::with_capacity(self.length);
        for head in scores.chunks(d) {
            let mut best = 0;
            for (i, &s) in head.iter().enumerate().skip(1) {
                if s > head[best] {
                    best = i;
                }
            }
            indices.push(best);
            confidence.push(head[best]);
        }
        Ok(Decoded {
            label: self.charset.label(&indices),
            indices,
            confidence,
        })
    }

    /// Decodes a single output tensor of `L*D` elements (any shape).
    pub fn decode<T: Scalar>(&self, output: &Tensor<T>) -> Result<Decoded<T>> {
        self.decode_row(output.data())
    }

    /// Decodes every row of a `[N, L*D]` batch output.
    pub fn decode_batch<T: Scalar>(&self, output: &Tensor<T>) -> Result<Vec<Decoded<T>>> {
        let [_, w] = output.dims2("decode")?;
        if w != self.width() {
            return Err(Error::shape("decode", "output width", self.width(), w));
        }
        output.data().chunks(w).map(|r| self.decode_row(r)).collect()
    }
}
