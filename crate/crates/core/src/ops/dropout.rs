//! Inverted dropout: survivors are scaled by `1 / (1 - rate)` at train time,
//! inference is the identity.

use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Per-element keep flags recorded by [`dropout`].
#[derive(Clone, Debug, PartialEq)]
pub struct DropoutMask {
    pub keep: Vec<bool>,
    pub scale: f64,
}

impl DropoutMask {
    pub fn dropped_fraction(&self) -> f64 {
        self.keep.iter().filter(|&&k| !k).count() as f64 / self.keep.len() as f64
    }
}

pub fn dropout<T: Scalar>(
    input: &Tensor<T>,
    rate: f64,
    mode: Mode,
    rng: &mut SplitMix64,
) -> Result<(Tensor<T>, DropoutMask)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidArgument(format!("dropout rate {rate} outside [0, 1)")));
    }
    if mode == Mode::Infer || rate == 0.0 {
        let mask = DropoutMask {
            keep: vec![true; input.len()],
            scale: 1.0,
        };
        return Ok((input.clone(), mask));
    }
    let scale = 1.0 / (1.0 - rate);
    let keep: Vec<bool> = (0..input.len()).map(|_| !rng.bernoulli(rate)).collect();
    let s = T::from_f64_lossy(scale);
    let data = input
        .data()
        .iter()
        .zip(&keep)
        .map(|(&x, &k)| if k { x * s } else { T::zero() })
        .collect();
    Ok((Tensor::new(input.shape(), data)?, DropoutMask { keep, scale }))
}

pub fn dropout_backward<T: Scalar>(mask: &DropoutMask, out_grad: &Tensor<T>) -> Result<Tensor<T>> {
    if mask.keep.len() != out_grad.len() {
        return Err(Error::shape("dropout_backward", "mask length", out_grad.len(), mask.keep.len()));
    }
    let s = T::from_f64_lossy(mask.scale);
    let data = out_grad
        .data()
        .iter()
        .zip(&mask.keep)
        .map(|(&g, &k)| if k { g * s } else { T::zero() })
        .collect();
    Tensor::new(out_grad.shape(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_zero_and_inference_are_identity() {
        let mut rng = SplitMix64::new(0);
        let x = Tensor::<f32>::from_fn(&[4, 5], |i| i as f32);
        let (y, m) = dropout(&x, 0.0, Mode::Train, &mut rng).unwrap();
        assert_eq!(y, x);
        assert!(m.keep.iter().all(|&k| k));
        let (y, _) = dropout(&x, 0.3, Mode::Infer, &mut rng).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn drop_fraction_large_sample() {
        let mut rng = SplitMix64::new(2024);
        let x = Tensor::<f32>::full(&[1_000_000], 1.0);
        let (y, m) = dropout(&x, 0.3, Mode::Train, &mut rng).unwrap();
        let frac = m.dropped_fraction();
        assert!((frac - 0.3).abs() <= 0.005, "{frac}");
        let scale = 1.0 / 0.7f32;
        assert!(y.data().iter().all(|&v| v == 0.0 || v == scale));
    }

    #[test]
    fn rejects_bad_rates() {
        let mut rng = SplitMix64::new(0);
        let x = Tensor::<f32>::zeros(&[3]);
        assert!(dropout(&x, 1.0, Mode::Train, &mut rng).is_err());
        assert!(dropout(&x, -0.1, Mode::Infer, &mut rng).is_err());
    }

    #[test]
    fn same_seed_same_mask() {
        let x = Tensor::<f64>::full(&[64], 2.0);
        let a = dropout(&x, 0.5, Mode::Train, &mut SplitMix64::new(5)).unwrap();
        let b = dropout(&x, 0.5, Mode::Train, &mut SplitMix64::new(5)).unwrap();
        assert_eq!(a, b);
        let g = dropout_backward(&a.1, &Tensor::full(&[64], 1.0)).unwrap();
        for (gi, &k) in g.data().iter().zip(&a.1.keep) {
            assert_eq!(*gi, if k { 2.0 } else { 0.0 });
        }
    }
}
