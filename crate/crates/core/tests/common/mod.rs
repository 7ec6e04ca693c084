//! Independent oracles shared by the integration tests and the acceptance
//! harness.

#![allow(dead_code)]

use deep_captcha::image::GrayImage;
use deep_captcha::model::{backward, forward, init_params, HeadMethod, ModelConfig, ModelParams};
use deep_captcha::ops::*;
use deep_captcha::rng::SplitMix64;
use deep_captcha::Tensor64;

pub const FD_STEP: f64 = 1e-6;
pub const GRAD_TOL: f64 = 1e-6;
pub const GRAD_SEEDS: u64 = 20;

/// `||a - b|| / max(||a||, ||b||)`, or 0 when both vanish.
pub fn rel_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Central finite differences of `f` with respect to every entry of `x`.
pub fn numeric_grad(x: &Tensor64, mut f: impl FnMut(&Tensor64) -> f64) -> Vec<f64> {
    let mut probe = x.clone();
    (0..x.len())
        .map(|i| {
            let orig = probe.data()[i];
            probe.data_mut()[i] = orig + FD_STEP;
            let up = f(&probe);
            probe.data_mut()[i] = orig - FD_STEP;
            let down = f(&probe);
            probe.data_mut()[i] = orig;
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

pub fn random_tensor(rng: &mut SplitMix64, shape: &[usize], lo: f64, hi: f64) -> Tensor64 {
    Tensor64::from_fn(shape, |_| rng.uniform(lo, hi))
}

/// Scalar projection `sum(w * y)` used to turn an op output into a loss.
pub fn project(y: &Tensor64, w: &Tensor64) -> f64 {
    y.data().iter().zip(w.data()).map(|(a, b)| a * b).sum()
}

/// Worst relative error over every gradient of one random conv2d instance.
pub fn check_conv(seed: u64) -> f64 {
    let mut rng = SplitMix64::new(seed);
    let n = 1 + rng.below(2) as usize;
    let c = 1 + rng.below(3) as usize;
    let k = 1 + rng.below(3) as usize;
    let ks = [1, 3, 5][rng.below(3) as usize];
    let (h, w) = (3 + rng.below(4) as usize, 3 + rng.below(4) as usize);
    let x = random_tensor(&mut rng, &[n, c, h, w], -1.0, 1.0);
    let kern = random_tensor(&mut rng, &[k, c, ks, ks], -1.0, 1.0);
    let b = random_tensor(&mut rng, &[k], -1.0, 1.0);
    let wts = random_tensor(&mut rng, &[n, k, h, w], -1.0, 1.0);
    let g = conv2d_backward(&x, &kern, &wts).unwrap();
    let nx = numeric_grad(&x, |x| project(&conv2d_forward(x, &kern, &b).unwrap(), &wts));
    let nk = numeric_grad(&kern, |kk| project(&conv2d_forward(&x, kk, &b).unwrap(), &wts));
    let nb = numeric_grad(&b, |bb| project(&conv2d_forward(&x, &kern, bb).unwrap(), &wts));
    rel_error(g.input_grad.as_ref().unwrap().data(), &nx)
        .max(rel_error(g.param_grads[0].data(), &nk))
        .max(rel_error(g.param_grads[1].data(), &nb))
}

pub fn check_maxpool(seed: u64) -> f64 {
    let mut rng = SplitMix64::new(seed);
    let shape = [1 + rng.below(2) as usize, 1 + rng.below(2) as usize, 2 + rng.below(5) as usize, 2 + rng.below(5) as usize];
    let x = random_tensor(&mut rng, &shape, -1.0, 1.0);
    let (y, idx) = maxpool2x2_forward(&x).unwrap();
    let wts = random_tensor(&mut rng, y.shape(), -1.0, 1.0);
    let g = maxpool2x2_backward(&idx, &wts).unwrap();
    let nx = numeric_grad(&x, |x| project(&maxpool2x2_forward(x).unwrap().0, &wts));
    rel_error(g.data(), &nx)
}

pub fn check_dense(seed: u64) -> f64 {
    let mut rng = SplitMix64::new(seed);
    let (n, f, u) = (1 + rng.below(3) as usize, 1 + rng.below(5) as usize, 1 + rng.below(5) as usize);
    let x = random_tensor(&mut rng, &[n, f], -1.0, 1.0);
    let w = random_tensor(&mut rng, &[f, u], -1.0, 1.0);
    let b = random_tensor(&mut rng, &[u], -1.0, 1.0);
    let wts = random_tensor(&mut rng, &[n, u], -1.0, 1.0);
    let g = dense_backward(&x, &w, &wts).unwrap();
    let nx = numeric_grad(&x, |x| project(&dense_forward(x, &w, &b).unwrap(), &wts));
    let nw = numeric_grad(&w, |ww| project(&dense_forward(&x, ww, &b).unwrap(), &wts));
    let nb = numeric_grad(&b, |bb| project(&dense_forward(&x, &w, bb).unwrap(), &wts));
    rel_error(g.input_grad.as_ref().unwrap().data(), &nx)
        .max(rel_error(g.param_grads[0].data(), &nw))
        .max(rel_error(g.param_grads[1].data(), &nb))
}

/// ReLU is checked away from its kink: inputs have magnitude >= 0.1.
pub fn check_relu(seed: u64) -> f64 {
    let mut rng = SplitMix64::new(seed);
    let x = Tensor64::from_fn(&[17], |_| {
        let m = rng.uniform(0.1, 2.0);
        if rng.bernoulli(0.5) {
            m
        } else {
            -m
        }
    });
    let wts = random_tensor(&mut rng, &[17], -1.0, 1.0);
    let g = relu_backward(&x, &wts).unwrap();
    rel_error(g.data(), &numeric_grad(&x, |x| project(&relu(x), &wts)))
}

pub fn check_sigmoid(seed: u64) -> f64 {
    let mut rng = SplitMix64::new(seed);
    let x = random_tensor(&mut rng, &[13], -6.0, 6.0);
    let wts = random_tensor(&mut rng, &[13], -1.0, 1.0);
    let g = sigmoid_backward(&sigmoid(&x), &wts).unwrap();
    rel_error(g.data(), &numeric_grad(&x, |x| project(&sigmoid(x), &wts)))
}

pub fn check_softmax(seed: u64) -> f64 {
    let mut rng = SplitMix64::new(seed);
    let x = random_tensor(&mut rng, &[3, 7], -4.0, 4.0);
    let wts = random_tensor(&mut rng, &[3, 7], -1.0, 1.0);
    let g = softmax_backward(&softmax(&x), &wts).unwrap();
    rel_error(g.data(), &numeric_grad(&x, |x| project(&softmax(x), &wts)))
}

/// Dropout with the mask held fixed across perturbations.
pub fn check_dropout(seed: u64) -> f64 {
    let mut rng = SplitMix64::new(seed);
    let x = random_tensor(&mut rng, &[4, 9], -1.0, 1.0);
    let wts = random_tensor(&mut rng, &[4, 9], -1.0, 1.0);
    let run = |x: &Tensor64| dropout(x, 0.3, Mode::Train, &mut SplitMix64::new(seed ^ 0xd0)).unwrap();
    let (_, mask) = run(&x);
    let g = dropout_backward(&mask, &wts).unwrap();
    rel_error(g.data(), &numeric_grad(&x, |x| project(&run(x).0, &wts)))
}

pub fn check_bce(seed: u64) -> f64 {
    let mut rng = SplitMix64::new(seed);
    let p = random_tensor(&mut rng, &[2, 6], 0.05, 0.95);
    let y = Tensor64::from_fn(&[2, 6], |_| if rng.bernoulli(0.5) { 1.0 } else { 0.0 });
    let (_, g) = bce_loss(&p, &y).unwrap();
    rel_error(g.data(), &numeric_grad(&p, |p| bce_loss(p, &y).unwrap().0))
}

/// The small configuration used for whole-network gradient checks.
pub fn tiny_config(head: HeadMethod) -> ModelConfig {
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

/// BCE of the tiny network against random one-hot targets, with a fixed
/// dropout mask; returns the worst relative error over all parameters.
pub fn check_full_model(seed: u64, head: HeadMethod) -> f64 {
    let cfg = tiny_config(head);
    let params: ModelParams<f64> = init_params(&cfg, seed);
    let mut rng = SplitMix64::new(seed.wrapping_add(1000));
    let n = 2;
    let x = random_tensor(&mut rng, &[n, 1, 8, 12], 0.0, 1.0);
    let mut y = Tensor64::zeros(&[n, cfg.output_width()]);
    for row in 0..n {
        for p in 0..cfg.length {
            let s = rng.below(cfg.classes as u64) as usize;
            y.data_mut()[row * cfg.output_width() + p * cfg.classes + s] = 1.0;
        }
    }
    let drop_seed = seed ^ 0xabcd;
    let loss_of = |p: &ModelParams<f64>| {
        let out = forward(p, &cfg, &x, Mode::Train, &mut SplitMix64::new(drop_seed)).unwrap();
        bce_loss(&out.output, &y).unwrap().0
    };
    let cache = forward(&params, &cfg, &x, Mode::Train, &mut SplitMix64::new(drop_seed)).unwrap();
    let (_, og) = bce_loss(&cache.output, &y).unwrap();
    let grads = backward(&params, &cfg, &cache, &og).unwrap();
    let mut worst = 0f64;
    for (i, g) in grads.iter().enumerate() {
        let num = numeric_grad(&params.tensors[i], |t| {
            let mut p = params.clone();
            p.tensors[i] = t.clone();
            loss_of(&p)
        });
        worst = worst.max(rel_error(g.data(), &num));
    }
    worst
}

/// Direct six-loop "same" convolution.
pub fn naive_conv(x: &Tensor64, k: &Tensor64, b: &Tensor64) -> Tensor64 {
    let [n, c, h, w] = [x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]];
    let [ko, _, kh, kw] = [k.shape()[0], k.shape()[1], k.shape()[2], k.shape()[3]];
    let mut out = Tensor64::zeros(&[n, ko, h, w]);
    for ni in 0..n {
        for ki in 0..ko {
            for y in 0..h {
                for xx in 0..w {
                    let mut acc = b.data()[ki];
                    for ci in 0..c {
                        for dy in 0..kh {
                            for dx in 0..kw {
                                let sy = y as isize + dy as isize - (kh / 2) as isize;
                                let sx = xx as isize + dx as isize - (kw / 2) as isize;
                                if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                                    continue;
                                }
                                acc += x.data()[((ni * c + ci) * h + sy as usize) * w + sx as usize]
                                    * k.data()[((ki * c + ci) * kh + dy) * kw + dx];
                            }
                        }
                    }
                    out.data_mut()[((ni * ko + ki) * h + y) * w + xx] = acc;
                }
            }
        }
    }
    out
}

/// Median by collecting the edge-replicated window and fully sorting it.
pub fn brute_median(img: &GrayImage, window: usize) -> GrayImage {
    let r = (window / 2) as isize;
    let mut out = img.clone();
    for y in 0..img.height {
        for x in 0..img.width {
            let mut vals = Vec::with_capacity(window * window);
            for dy in -r..=r {
                for dx in -r..=r {
                    let sy = (y as isize + dy).clamp(0, img.height as isize - 1) as usize;
                    let sx = (x as isize + dx).clamp(0, img.width as isize - 1) as usize;
                    vals.push(img.get(sx, sy));
                }
            }
            vals.sort_unstable();
            out.set(x, y, vals[window * window / 2]);
        }
    }
    out
}

/// Scalar Adam trajectory for a constant gradient.
pub fn scalar_adam(theta0: f64, g: f64, steps: usize, lr: f64, b1: f64, b2: f64, eps: f64) -> Vec<f64> {
    let (mut theta, mut m, mut v) = (theta0, 0.0, 0.0);
    let mut out = Vec::with_capacity(steps);
    for t in 1..=steps {
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        let m_hat = m / (1.0 - b1.powi(t as i32));
        let v_hat = v / (1.0 - b2.powi(t as i32));
        theta -= lr * m_hat / (v_hat.sqrt() + eps);
        out.push(theta);
    }
    out
}
