//! The CAPTCHA network: three conv(5x5, same) + ReLU + 2x2 max-pool stages,
//! a ReLU dense layer with dropout, and either `L` softmax heads or one
//! sigmoid head.
//!
//! Head outputs are laid out as `[N, L*D]`: position `p`, symbol `i` lives at
//! column `p*D + i` for both head methods.

use super::config::{HeadMethod, ModelConfig};
use crate::error::{Error, Result};
use crate::ops::activation::{sigmoid_scalar, softmax_backward_slice, softmax_slice};
use crate::ops::{
    conv2d_backward_with, conv2d_forward, dense_backward, dense_forward, dropout, dropout_backward,
    maxpool2x2_backward, maxpool2x2_forward, relu, relu_backward, DropoutMask, Mode, PoolIndices,
};
use crate::rng::SplitMix64;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// All trainable tensors, in the order given by [`ModelConfig::param_shapes`].
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    pub tensors: Vec<Tensor<T>>,
}

const DENSE_W: usize = 6;
const DENSE_B: usize = 7;
const HEADS: usize = 8;

impl<T: Scalar> ModelParams<T> {
    pub fn zeros(cfg: &ModelConfig) -> Self {
        Self {
            tensors: cfg.param_shapes().iter().map(|s| Tensor::zeros(s)).collect(),
        }
    }

    /// Checks tensor count and shapes against `cfg`.
    pub fn check(&self, cfg: &ModelConfig) -> Result<()> {
        let shapes = cfg.param_shapes();
        if shapes.len() != self.tensors.len() {
            return Err(Error::shape("model params", "tensor count", shapes.len(), self.tensors.len()));
        }
        for (i, (s, t)) in shapes.iter().zip(&self.tensors).enumerate() {
            t.ensure_shape("model params", &format!("tensor {i}"), s)?;
        }
        Ok(())
    }

    pub fn conv(&self, stage: usize) -> (&Tensor<T>, &Tensor<T>) {
        (&self.tensors[2 * stage], &self.tensors[2 * stage + 1])
    }

    pub fn dense(&self) -> (&Tensor<T>, &Tensor<T>) {
        (&self.tensors[DENSE_W], &self.tensors[DENSE_B])
    }

    /// Head `h` (always 0 for the sigmoid head).
    pub fn head(&self, h: usize) -> (&Tensor<T>, &Tensor<T>) {
        (&self.tensors[HEADS + 2 * h], &self.tensors[HEADS + 2 * h + 1])
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        ModelParams {
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::all_finite)
    }
}

/// He-uniform weights (`U(-b, b)`, `b = sqrt(6 / fan_in)`) and zero biases,
/// drawn in parameter order from one SplitMix64 stream. Sampling happens in
/// `f64`, so `f32` parameters are the rounded `f64` ones for the same seed.
pub fn init_params<T: Scalar>(cfg: &ModelConfig, seed: u64) -> ModelParams<T> {
    let mut rng = SplitMix64::new(seed);
    let tensors = cfg
        .param_shapes()
        .iter()
        .zip(cfg.fan_ins())
        .map(|(shape, fan_in)| {
            if fan_in == 0 {
                Tensor::zeros(shape)
            } else {
                let bound = (6.0 / fan_in as f64).sqrt();
                Tensor::from_fn(shape, |_| T::from_f64_lossy(rng.uniform(-bound, bound)))
            }
        })
        .collect();
    ModelParams { tensors }
}

/// Activations kept from [`forward`] for [`backward`].
#[derive(Clone, Debug)]
pub struct ForwardCache<T> {
    /// Input of each conv stage.
    stage_inputs: Vec<Tensor<T>>,
    /// Post-ReLU conv outputs.
    stage_outputs: Vec<Tensor<T>>,
    pools: Vec<PoolIndices>,
    pooled_shapes: Vec<Vec<usize>>,
    /// Post-ReLU dense activations.
    hidden: Tensor<T>,
    mask: DropoutMask,
    /// Dropout output (input of the heads).
    features: Tensor<T>,
    /// Head outputs, `[N, L*D]`.
    pub output: Tensor<T>,
}

impl<T: Scalar> ForwardCache<T> {
    /// `[N, C, H, W]` after each conv + pool stage.
    pub fn pooled_shapes(&self) -> &[Vec<usize>] {
        &self.pooled_shapes
    }

    /// `[N, F]` input of the dense layer.
    pub fn flattened_shape(&self) -> &[usize] {
        self.stage_inputs[3].shape()
    }
}

fn head_forward<T: Scalar>(
    params: &ModelParams<T>,
    cfg: &ModelConfig,
    features: &Tensor<T>,
) -> Result<Tensor<T>> {
    let n = features.shape()[0];
    let d = cfg.classes;
    let width = cfg.output_width();
    match cfg.head {
        HeadMethod::Softmax => {
            let mut out = vec![T::zero(); n * width];
            for h in 0..cfg.length {
                let (w, b) = params.head(h);
                let mut z = dense_forward(features, w, b)?;
                for (row, zr) in z.data_mut().chunks_mut(d).enumerate() {
                    softmax_slice(zr);
                    out[row * width + h * d..row * width + (h + 1) * d].copy_from_slice(zr);
                }
            }
            Tensor::new(&[n, width], out)
        }
        HeadMethod::Sigmoid => {
            let (w, b) = params.head(0);
            Ok(dense_forward(features, w, b)?.map(sigmoid_scalar))
        }
    }
}

/// Runs the network on `[N, 1, H, W]` input. In [`Mode::Train`] dropout draws
/// its mask from `rng`; in [`Mode::Infer`] `rng` is untouched.
pub fn forward<T: Scalar>(
    params: &ModelParams<T>,
    cfg: &ModelConfig,
    input: &Tensor<T>,
    mode: Mode,
    rng: &mut SplitMix64,
) -> Result<ForwardCache<T>> {
    let [n, c, h, w] = input.dims4("forward")?;
    if (c, h, w) != (1, cfg.input_height, cfg.input_width) {
        return Err(Error::shape(
            "forward",
            "input (C,H,W)",
            (1, cfg.input_height, cfg.input_width),
            (c, h, w),
        ));
    }
    params.check(cfg)?;

    let mut stage_inputs = Vec::with_capacity(3);
    let mut stage_outputs = Vec::with_capacity(3);
    let mut pools = Vec::with_capacity(3);
    let mut pooled_shapes = Vec::with_capacity(3);
    let mut x = input.clone();
    for stage in 0..3 {
        let (k, b) = params.conv(stage);
        let a = relu(&conv2d_forward(&x, k, b)?);
        let (pooled, idx) = maxpool2x2_forward(&a)?;
        stage_inputs.push(x);
        stage_outputs.push(a);
        pools.push(idx);
        pooled_shapes.push(pooled.shape().to_vec());
        x = pooled;
    }
    let flat = x.reshape(&[n, cfg.flatten_width()])?;
    let (dw, db) = params.dense();
    let hidden = relu(&dense_forward(&flat, dw, db)?);
    stage_inputs.push(flat);
    let (features, mask) = dropout(&hidden, cfg.dropout, mode, rng)?;
    let output = head_forward(params, cfg, &features)?;
    Ok(ForwardCache {
        stage_inputs,
        stage_outputs,
        pools,
        pooled_shapes,
        hidden,
        mask,
        features,
        output,
    })
}

/// Inference-mode forward pass returning only the head outputs.
pub fn predict<T: Scalar>(params: &ModelParams<T>, cfg: &ModelConfig, input: &Tensor<T>) -> Result<Tensor<T>> {
    let mut unused = SplitMix64::new(0);
    Ok(forward(params, cfg, input, Mode::Infer, &mut unused)?.output)
}

/// Gradients of every parameter given `d loss / d output` (`[N, L*D]`).
pub fn backward<T: Scalar>(
    params: &ModelParams<T>,
    cfg: &ModelConfig,
    cache: &ForwardCache<T>,
    out_grad: &Tensor<T>,
) -> Result<Vec<Tensor<T>>> {
    out_grad.ensure_shape("backward", "output gradient", cache.output.shape())?;
    if cache.stage_inputs.len() != 4 || cache.stage_outputs.len() != 3 || cache.pools.len() != 3 {
        return Err(Error::InvalidArgument("backward: incomplete forward cache".into()));
    }
    params.check(cfg)?;
    let n = cache.output.shape()[0];
    let d = cfg.classes;
    let width = cfg.output_width();
    let mut grads: Vec<Option<Tensor<T>>> = vec![None; params.tensors.len()];

    let d_features = match cfg.head {
        HeadMethod::Softmax => {
            let mut acc: Option<Tensor<T>> = None;
            for h in 0..cfg.length {
                let mut dz = vec![T::zero(); n * d];
                for row in 0..n {
                    let span = row * width + h * d..row * width + (h + 1) * d;
                    softmax_backward_slice(
                        &cache.output.data()[span.clone()],
                        &out_grad.data()[span],
                        &mut dz[row * d..(row + 1) * d],
                    );
                }
                let dz = Tensor::new(&[n, d], dz)?;
                let g = dense_backward(&cache.features, params.head(h).0, &dz)?;
                let [gw, gb]: [Tensor<T>; 2] = g.param_grads.try_into().expect("dense has two params");
                grads[HEADS + 2 * h] = Some(gw);
                grads[HEADS + 2 * h + 1] = Some(gb);
                let dx = g.input_grad.expect("dense returns input grad");
                acc = Some(match acc {
                    None => dx,
                    Some(mut a) => {
                        for (x, &y) in a.data_mut().iter_mut().zip(dx.data()) {
                            *x += y;
                        }
                        a
                    }
                });
            }
            acc.expect("length >= 1")
        }
        HeadMethod::Sigmoid => {
            let dz = Tensor::new(
                &[n, width],
                cache
                    .output
                    .data()
                    .iter()
                    .zip(out_grad.data())
                    .map(|(&s, &g)| g * s * (T::one() - s))
                    .collect(),
            )?;
            let g = dense_backward(&cache.features, params.head(0).0, &dz)?;
            let [gw, gb]: [Tensor<T>; 2] = g.param_grads.try_into().expect("dense has two params");
            grads[HEADS] = Some(gw);
            grads[HEADS + 1] = Some(gb);
            g.input_grad.expect("dense returns input grad")
        }
    };

    let d_hidden = dropout_backward(&cache.mask, &d_features)?;
    let d_pre = relu_backward(&cache.hidden, &d_hidden)?;
    let g = dense_backward(&cache.stage_inputs[3], params.dense().0, &d_pre)?;
    let [gw, gb]: [Tensor<T>; 2] = g.param_grads.try_into().expect("dense has two params");
    grads[DENSE_W] = Some(gw);
    grads[DENSE_B] = Some(gb);

    let [c3, h3, w3] = cfg.stage_shapes()[2];
    let mut d_x = g
        .input_grad
        .expect("dense returns input grad")
        .reshape(&[n, c3, h3, w3])?;
    for stage in (0..3).rev() {
        let d_act = maxpool2x2_backward(&cache.pools[stage], &d_x)?;
        let d_conv = relu_backward(&cache.stage_outputs[stage], &d_act)?;
        let g = conv2d_backward_with(&cache.stage_inputs[stage], params.conv(stage).0, &d_conv, stage > 0)?;
        let [gk, gb]: [Tensor<T>; 2] = g.param_grads.try_into().expect("conv has two params");
        grads[2 * stage] = Some(gk);
        grads[2 * stage + 1] = Some(gb);
        if let Some(di) = g.input_grad {
            d_x = di;
        }
    }
    Ok(grads.into_iter().map(|g| g.expect("every parameter has a gradient")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::captcha::CharsetKind;

    fn tiny(head: HeadMethod) -> ModelConfig {
        ModelConfig {
            input_height: 8,
            input_width: 12,
            conv_widths: [2, 2, 2],
            kernel: 5,
            dense: 8,
            dropout: 0.3,
            length: 2,
            classes: 3,
            head,
            charset: None,
        }
    }

    #[test]
    fn zero_params_give_uniform_heads() {
        let cfg = ModelConfig::deep_captcha_v1(CharsetKind::Numeric, 3, HeadMethod::Softmax);
        let params = ModelParams::<f32>::zeros(&cfg);
        let x = Tensor::full(&[2, 1, 25, 67], 0.5);
        let y = predict(&params, &cfg, &x).unwrap();
        assert_eq!(y.shape(), &[2, 30]);
        assert!(y.data().iter().all(|&p| (p - 0.1).abs() < 1e-7));
    }

    #[test]
    fn init_is_deterministic_with_zero_bias() {
        let cfg = tiny(HeadMethod::Softmax);
        let a = init_params::<f32>(&cfg, 7);
        assert_eq!(a, init_params::<f32>(&cfg, 7));
        assert_ne!(a, init_params::<f32>(&cfg, 8));
        for (i, t) in a.tensors.iter().enumerate() {
            if t.ndim() == 1 {
                assert!(t.data().iter().all(|&v| v == 0.0), "bias {i}");
            }
        }
        assert_eq!(init_params::<f64>(&cfg, 7).cast::<f32>(), a);
    }

    #[test]
    fn input_shape_is_checked() {
        let cfg = tiny(HeadMethod::Sigmoid);
        let p = init_params::<f32>(&cfg, 1);
        let mut rng = SplitMix64::new(0);
        assert!(forward(&p, &cfg, &Tensor::zeros(&[1, 1, 8, 13]), Mode::Infer, &mut rng).is_err());
        assert!(forward(&p, &cfg, &Tensor::zeros(&[1, 2, 8, 12]), Mode::Infer, &mut rng).is_err());
        let wrong = init_params::<f32>(&tiny(HeadMethod::Softmax), 1);
        assert!(forward(&wrong, &cfg, &Tensor::zeros(&[1, 1, 8, 12]), Mode::Infer, &mut rng).is_err());
    }

    #[test]
    fn zero_output_grad_gives_zero_grads() {
        for head in [HeadMethod::Softmax, HeadMethod::Sigmoid] {
            let cfg = tiny(head);
            let p = init_params::<f64>(&cfg, 3);
            let mut rng = SplitMix64::new(1);
            let x = Tensor::from_fn(&[2, 1, 8, 12], |_| rng.next_f64());
            let cache = forward(&p, &cfg, &x, Mode::Train, &mut rng).unwrap();
            let g = backward(&p, &cfg, &cache, &Tensor::zeros(cache.output.shape())).unwrap();
            assert!(g.iter().all(|t| t.data().iter().all(|&v| v == 0.0)));
        }
    }

    #[test]
    fn duplicated_sample_doubles_gradient() {
        let cfg = ModelConfig {
            dropout: 0.0,
            ..tiny(HeadMethod::Softmax)
        };
        let p = init_params::<f64>(&cfg, 5);
        let mut rng = SplitMix64::new(2);
        let one = Tensor::from_fn(&[1, 1, 8, 12], |_| rng.next_f64());
        let mut both = one.data().to_vec();
        both.extend_from_slice(one.data());
        let two = Tensor::new(&[2, 1, 8, 12], both).unwrap();
        let og1 = Tensor::from_fn(&[1, 6], |i| i as f64 - 2.0);
        let og2 = Tensor::from_fn(&[2, 6], |i| (i % 6) as f64 - 2.0);
        let g1 = backward(&p, &cfg, &forward(&p, &cfg, &one, Mode::Train, &mut rng).unwrap(), &og1).unwrap();
        let g2 = backward(&p, &cfg, &forward(&p, &cfg, &two, Mode::Train, &mut rng).unwrap(), &og2).unwrap();
        for (a, b) in g1.iter().zip(&g2) {
            for (&x, &y) in a.data().iter().zip(b.data()) {
                assert!((2.0 * x - y).abs() <= 1e-12 * (1.0 + y.abs()));
            }
        }
    }

    #[test]
    fn inference_is_deterministic_and_ignores_rng() {
        let cfg = tiny(HeadMethod::Softmax);
        let p = init_params::<f32>(&cfg, 9);
        let x = Tensor::full(&[3, 1, 8, 12], 0.25);
        let a = forward(&p, &cfg, &x, Mode::Infer, &mut SplitMix64::new(1)).unwrap();
        let b = forward(&p, &cfg, &x, Mode::Infer, &mut SplitMix64::new(2)).unwrap();
        assert_eq!(a.output, b.output);
    }
}
