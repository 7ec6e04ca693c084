//! Mini-batch training loop.

use std::fmt::Write as _;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::eval::{argmax_positions, check_compatible, predict_dataset};
use crate::model::{backward, forward, init_params, HeadMethod, ModelConfig, ModelParams};
use crate::ops::{bce_loss, Mode};
use crate::optim::{Adam, AdamConfig, Optimizer, SgdConfig, SgdNesterov};
use crate::rng::{derive_seed, SplitMix64};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OptimizerConfig {
    Adam(AdamConfig),
    Sgd(SgdConfig),
}

impl OptimizerConfig {
    pub fn name(&self) -> &'static str {
        match self {
            OptimizerConfig::Adam(_) => "adam",
            OptimizerConfig::Sgd(_) => "sgd",
        }
    }

    pub fn lr(&self) -> f64 {
        match self {
            OptimizerConfig::Adam(c) => c.lr,
            OptimizerConfig::Sgd(c) => c.lr,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    /// Seeds initialization, shuffling and dropout.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 128,
            optimizer: OptimizerConfig::Adam(AdamConfig::default()),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument("epochs and batch size must be >= 1".into()));
        }
        let lr = self.optimizer.lr();
        if !(lr.is_finite() && lr >= 0.0) {
            return Err(Error::InvalidArgument(format!("learning rate {lr} must be finite and >= 0")));
        }
        if let OptimizerConfig::Sgd(c) = self.optimizer {
            if !(0.0..1.0).contains(&c.momentum) {
                return Err(Error::InvalidArgument(format!("momentum {} outside [0, 1)", c.momentum)));
            }
        }
        Ok(())
    }
}

/// One line of the training history.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HistoryRow {
    pub epoch: usize,
    /// Mean training loss over the epoch's batches (dropout active).
    pub train_loss: f64,
    /// Whole-CAPTCHA accuracy of the training-mode outputs seen during the epoch.
    pub train_acc: f64,
    pub val_loss: Option<f64>,
    pub val_acc: Option<f64>,
}

pub const HISTORY_HEADER: &str = "epoch,train_loss,train_acc,val_loss,val_acc";

/// Renders history as CSV. Missing validation values are left empty.
pub fn history_csv(rows: &[HistoryRow]) -> String {
    let mut s = String::from(HISTORY_HEADER);
    s.push('\n');
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.9}")).unwrap_or_default();
    for r in rows {
        let _ = writeln!(
            s,
            "{},{:.9},{:.9},{},{}",
            r.epoch,
            r.train_loss,
            r.train_acc,
            opt(r.val_loss),
            opt(r.val_acc)
        );
    }
    s
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ModelParams<f32>,
    pub history: Vec<HistoryRow>,
    /// The sample order consumed in each epoch.
    pub order_log: Vec<Vec<u32>>,
}

/// Samples in a batch whose every position is predicted correctly.
fn whole_hits(outputs: &[f32], data: &Dataset, batch: &[usize], classes: usize) -> usize {
    argmax_positions(outputs, classes)
        .chunks(data.length)
        .zip(batch)
        .filter(|(p, &i)| *p == data.sample_targets(i))
        .count()
}

pub fn train(cfg: &TrainConfig, model: &ModelConfig, data: &Dataset, val: Option<&Dataset>) -> Result<TrainOutcome> {
    train_with(cfg, model, data, val, |_| {})
}

/// Like [`train`], calling `on_epoch` after every completed epoch.
pub fn train_with(
    cfg: &TrainConfig,
    model: &ModelConfig,
    data: &Dataset,
    val: Option<&Dataset>,
    mut on_epoch: impl FnMut(&HistoryRow),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    model.validate()?;
    check_compatible(model, data)?;
    if let Some(v) = val {
        check_compatible(model, v)?;
    }
    if data.is_empty() {
        return Err(Error::EmptyManifest(data.dir.clone()));
    }

    let mut params = init_params::<f32>(model, cfg.seed);
    let mut opt: Box<dyn Optimizer<f32>> = match cfg.optimizer {
        OptimizerConfig::Adam(c) => Box::new(Adam::new(c, &params.tensors)),
        OptimizerConfig::Sgd(c) => Box::new(SgdNesterov::new(c, &params.tensors)),
    };
    let mut shuffle_rng = SplitMix64::new(derive_seed(cfg.seed, 1));
    let mut dropout_rng = SplitMix64::new(derive_seed(cfg.seed, 2));
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut order_log = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        shuffle_rng.shuffle(&mut order);
        order_log.push(order.iter().map(|&i| i as u32).collect());
        let mut loss_sum = 0f64;
        let mut hits = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let x = data.batch(chunk);
            let y = data.batch_targets(chunk);
            let cache = forward(&params, model, &x, Mode::Train, &mut dropout_rng)?;
            let (loss, grad) = bce_loss(&cache.output, &y)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            let grads = backward(&params, model, &cache, &grad)?;
            opt.step(&mut params.tensors, &grads)?;
            loss_sum += f64::from(loss) * chunk.len() as f64;
            hits += whole_hits(cache.output.data(), data, chunk, model.classes);
        }
        if !params.all_finite() {
            return Err(Error::Divergence { epoch });
        }
        let (val_loss, val_acc) = match val {
            Some(v) => {
                let p = predict_dataset(&params, model, v)?;
                if !p.loss.is_finite() {
                    return Err(Error::Divergence { epoch });
                }
                let whole = p
                    .indices
                    .chunks(v.length)
                    .zip(v.targets.chunks(v.length))
                    .filter(|(a, b)| a == b)
                    .count();
                (Some(p.loss), Some(whole as f64 / v.len() as f64))
            }
            None => (None, None),
        };
        let row = HistoryRow {
            epoch,
            train_loss: loss_sum / data.len() as f64,
            train_acc: hits as f64 / data.len() as f64,
            val_loss,
            val_acc,
        };
        on_epoch(&row);
        history.push(row);
    }
    Ok(TrainOutcome {
        params,
        history,
        order_log,
    })
}

/// Softmax-head and sigmoid-head runs on identical data, seed and order.
#[derive(Clone, Debug)]
pub struct HeadComparison {
    pub softmax: TrainOutcome,
    pub sigmoid: TrainOutcome,
}

pub fn compare_heads(
    cfg: &TrainConfig,
    model: &ModelConfig,
    data: &Dataset,
    val: Option<&Dataset>,
) -> Result<HeadComparison> {
    let with = |head| ModelConfig { head, ..model.clone() };
    Ok(HeadComparison {
        softmax: train(cfg, &with(HeadMethod::Softmax), data, val)?,
        sigmoid: train(cfg, &with(HeadMethod::Sigmoid), data, val)?,
    })
}

/// Side-by-side CSV of a head comparison.
pub fn comparison_csv(c: &HeadComparison) -> String {
    let mut s = String::from("epoch,softmax_train_loss,softmax_val_acc,sigmoid_train_loss,sigmoid_val_acc\n");
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.9}")).unwrap_or_default();
    for (a, b) in c.softmax.history.iter().zip(&c.sigmoid.history) {
        let _ = writeln!(
            s,
            "{},{:.9},{},{:.9},{}",
            a.epoch,
            a.train_loss,
            opt(a.val_acc),
            b.train_loss,
            opt(b.val_acc)
        );
    }
    s
}
