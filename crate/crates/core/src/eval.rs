//! Accuracy metrics and confusion matrices.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::captcha::Charset;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{predict, ModelConfig, ModelParams};
use crate::ops::bce_loss;

/// Samples per inference batch.
pub const EVAL_BATCH: usize = 256;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub samples: usize,
    pub length: usize,
    /// Charset symbols in index order; rows and columns of `confusion`.
    pub symbols: String,
    pub per_position_accuracy: Vec<f64>,
    pub whole_accuracy: f64,
    /// `confusion[true][predicted]`, summed over every position.
    pub confusion: Vec<Vec<u64>>,
    pub loss: f64,
}

impl EvalReport {
    /// Builds a report from flat `samples * length` symbol indices.
    pub fn from_predictions(
        charset: &Charset,
        length: usize,
        truth: &[usize],
        predicted: &[usize],
        loss: f64,
    ) -> Result<Self> {
        if length == 0 || truth.len() != predicted.len() || !truth.len().is_multiple_of(length) || truth.is_empty() {
            return Err(Error::shape("evaluate", "prediction count", truth.len(), predicted.len()));
        }
        let d = charset.len();
        let samples = truth.len() / length;
        let mut position_hits = vec![0u64; length];
        let mut whole_hits = 0u64;
        let mut confusion = vec![vec![0u64; d]; d];
        for (t, p) in truth.chunks(length).zip(predicted.chunks(length)) {
            let mut all = true;
            for (pos, (&ti, &pi)) in t.iter().zip(p).enumerate() {
                if ti >= d || pi >= d {
                    return Err(Error::InvalidArgument(format!("symbol index {} out of range", ti.max(pi))));
                }
                confusion[ti][pi] += 1;
                if ti == pi {
                    position_hits[pos] += 1;
                } else {
                    all = false;
                }
            }
            whole_hits += u64::from(all);
        }
        Ok(Self {
            samples,
            length,
            symbols: charset.symbols().iter().collect(),
            per_position_accuracy: position_hits.iter().map(|&h| h as f64 / samples as f64).collect(),
            whole_accuracy: whole_hits as f64 / samples as f64,
            confusion,
            loss,
        })
    }

    /// Mean of the per-position accuracies.
    pub fn symbol_accuracy(&self) -> f64 {
        self.per_position_accuracy.iter().sum::<f64>() / self.length as f64
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Header row of symbols, then one row of counts per true symbol.
    pub fn confusion_csv(&self) -> String {
        let mut s = String::new();
        let header: Vec<String> = self.symbols.chars().map(String::from).collect();
        let _ = writeln!(s, "{}", header.join(","));
        for row in &self.confusion {
            let cells: Vec<String> = row.iter().map(u64::to_string).collect();
            let _ = writeln!(s, "{}", cells.join(","));
        }
        s
    }
}

/// Network outputs for a whole dataset.
#[derive(Clone, Debug)]
pub struct Predictions {
    /// `samples * L * D` scores.
    pub outputs: Vec<f32>,
    /// Argmax symbol index per position, `samples * L`.
    pub indices: Vec<usize>,
    /// Mean loss over all samples.
    pub loss: f64,
}

/// Checks that `data` can be fed to a model built from `cfg`.
pub fn check_compatible(cfg: &ModelConfig, data: &Dataset) -> Result<()> {
    if let Some(kind) = cfg.charset {
        if kind != data.charset.kind() {
            return Err(Error::Mismatch {
                what: "charset",
                model: kind.name().into(),
                data: data.charset.kind().name().into(),
            });
        }
    }
    for (what, model, data) in [
        ("alphabet size", cfg.classes, data.classes()),
        ("label length", cfg.length, data.length),
        ("input height", cfg.input_height, data.height),
        ("input width", cfg.input_width, data.width),
    ] {
        if model != data {
            return Err(Error::Mismatch {
                what,
                model: model.to_string(),
                data: data.to_string(),
            });
        }
    }
    Ok(())
}

/// Per-position argmax over `[rows, L*D]` scores; ties go to the smallest index.
pub fn argmax_positions(scores: &[f32], classes: usize) -> Vec<usize> {
    scores
        .chunks(classes)
        .map(|head| {
            let mut best = 0;
            for (i, &s) in head.iter().enumerate().skip(1) {
                if s > head[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

/// Inference-mode pass over every sample.
pub fn predict_dataset(params: &ModelParams<f32>, cfg: &ModelConfig, data: &Dataset) -> Result<Predictions> {
    check_compatible(cfg, data)?;
    let mut outputs = Vec::with_capacity(data.len() * cfg.output_width());
    let mut loss_sum = 0f64;
    let all: Vec<usize> = (0..data.len()).collect();
    for chunk in all.chunks(EVAL_BATCH) {
        let out = predict(params, cfg, &data.batch(chunk))?;
        let (loss, _) = bce_loss(&out, &data.batch_targets(chunk))?;
        loss_sum += f64::from(loss) * chunk.len() as f64;
        outputs.extend_from_slice(out.data());
    }
    let indices = argmax_positions(&outputs, cfg.classes);
    Ok(Predictions {
        outputs,
        indices,
        loss: loss_sum / data.len() as f64,
    })
}

pub fn evaluate(params: &ModelParams<f32>, cfg: &ModelConfig, data: &Dataset) -> Result<(EvalReport, Predictions)> {
    let preds = predict_dataset(params, cfg, data)?;
    let report = EvalReport::from_predictions(&data.charset, data.length, &data.targets, &preds.indices, preds.loss)?;
    Ok((report, preds))
}
