//! Acceptance suite. Runs every criterion in order, prints one PASS/FAIL
//! line each, and exits non-zero if any fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use common::*;
use deep_captcha::captcha::{generate_dataset, Charset, CharsetKind, GenConfig, LabelMode};
use deep_captcha::data::Dataset;
use deep_captcha::eval::{evaluate, EvalReport};
use deep_captcha::image::GrayImage;
use deep_captcha::model::{encode_checkpoint, forward, init_params, HeadMethod, LabelCodec, ModelConfig};
use deep_captcha::ops::{conv2d_forward, Mode};
use deep_captcha::optim::{Adam, AdamConfig, Optimizer};
use deep_captcha::preprocess::{median_filter, Pipeline};
use deep_captcha::rng::SplitMix64;
use deep_captcha::train::{history_csv, train_with, OptimizerConfig, TrainConfig, TrainOutcome};
use deep_captcha::{Tensor32, Tensor64};

const TRAIN_SAMPLES: usize = 30_000;
const TEST_SAMPLES: usize = 3_000;
const LEARN_EPOCHS: usize = 15;
const LEARN_LENGTH: usize = 3;
const HEAD_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

/// Every evaluation made by the suite, for the ordering criterion.
#[derive(Default)]
struct Ledger {
    reports: Vec<(String, EvalReport)>,
}

impl Ledger {
    fn eval(&mut self, name: &str, out: &TrainOutcome, model: &ModelConfig, data: &Dataset) -> EvalReport {
        let (r, _) = evaluate(&out.params, model, data).expect("evaluate");
        self.reports.push((name.to_string(), r.clone()));
        r
    }
}

fn numeric_gen(length: usize) -> GenConfig {
    GenConfig {
        length,
        ..GenConfig::default()
    }
}

fn dataset(dir: &Path, count: usize, cfg: &GenConfig, seed: u64) -> Dataset {
    generate_dataset(count, cfg, LabelMode::Uniform, seed, dir).expect("generate");
    Dataset::load(dir, None, &Pipeline::default()).expect("load")
}

fn progress(tag: &str) -> impl FnMut(&deep_captcha::train::HistoryRow) + '_ {
    let t = Instant::now();
    move |r| {
        eprintln!(
            "    [{tag}] epoch {:>3} loss {:.5} train_acc {:.4} val_acc {} ({:.0?})",
            r.epoch,
            r.train_loss,
            r.train_acc,
            r.val_acc.map_or("-".into(), |a| format!("{a:.4}")),
            t.elapsed()
        )
    }
}

type OpCheck = (&'static str, fn(u64) -> f64);

fn criterion_1() -> Verdict {
    let t = Instant::now();
    let checks: [OpCheck; 8] = [
        ("conv2d", check_conv),
        ("maxpool", check_maxpool),
        ("dense", check_dense),
        ("relu", check_relu),
        ("sigmoid", check_sigmoid),
        ("softmax", check_softmax),
        ("dropout", check_dropout),
        ("bce", check_bce),
    ];
    let mut worst = Vec::new();
    for (name, f) in checks {
        worst.push((name, (0..GRAD_SEEDS).map(f).fold(0.0, f64::max)));
    }
    for (name, head) in [("net/softmax", HeadMethod::Softmax), ("net/sigmoid", HeadMethod::Sigmoid)] {
        worst.push((name, (0..GRAD_SEEDS).map(|s| check_full_model(s, head)).fold(0.0, f64::max)));
    }
    let elapsed = t.elapsed().as_secs_f64();
    let max = worst.iter().map(|w| w.1).fold(0.0, f64::max);
    let detail: Vec<String> = worst.iter().map(|(n, e)| format!("{n} {e:.1e}")).collect();
    verdict(
        max <= GRAD_TOL && elapsed < 60.0,
        format!(
            "max rel err {max:.2e} <= {GRAD_TOL:e} over {GRAD_SEEDS} seeds/op in {elapsed:.1}s [{}]",
            detail.join(", ")
        ),
    )
}

fn criterion_2() -> Verdict {
    let mut rng = SplitMix64::new(2);
    let mut conv_ok = 0;
    let trials = 200;
    for _ in 0..trials {
        let n = 1 + rng.below(2) as usize;
        let c = 1 + rng.below(3) as usize;
        let k = 1 + rng.below(3) as usize;
        let ks = [1, 3, 5, 7][rng.below(4) as usize];
        let (h, w) = (1 + rng.below(8) as usize, 1 + rng.below(8) as usize);
        let mut grid = |shape: &[usize]| Tensor64::from_fn(shape, |_| (rng.below(17) as f64 - 8.0) / 8.0);
        let (x, kern, b) = (grid(&[n, c, h, w]), grid(&[k, c, ks, ks]), grid(&[k]));
        conv_ok += usize::from(conv2d_forward(&x, &kern, &b).unwrap() == naive_conv(&x, &kern, &b));
    }
    let x = Tensor64::from_fn(&[2, 1, 7, 7], |_| rng.uniform(-1.0, 1.0));
    let kern = Tensor64::from_fn(&[3, 1, 5, 5], |_| rng.uniform(-1.0, 1.0));
    let b = Tensor64::from_fn(&[3], |_| rng.uniform(-1.0, 1.0));
    let real_err = conv2d_forward(&x, &kern, &b)
        .unwrap()
        .data()
        .iter()
        .zip(naive_conv(&x, &kern, &b).data())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);

    let mut median_ok = 0;
    for i in 0..100 {
        let (w, h) = (3 + rng.below(40) as usize, 3 + rng.below(30) as usize);
        let img = GrayImage::new(w, h, (0..w * h).map(|_| rng.below(256) as u8).collect()).unwrap();
        let window = if i % 4 == 3 && w.min(h) >= 5 { 5 } else { 3 };
        median_ok += usize::from(median_filter(&img, window).unwrap() == brute_median(&img, window));
    }

    let cfg = AdamConfig::default();
    let oracle = scalar_adam(0.0, 1.0, 10, cfg.lr, cfg.beta1, cfg.beta2, cfg.epsilon);
    let mut adam_err = 0f64;
    let mut p64 = vec![Tensor64::zeros(&[1])];
    let mut opt64 = Adam::new(cfg, &p64);
    let mut p32 = vec![Tensor32::zeros(&[1])];
    let mut opt32 = Adam::new(cfg, &p32);
    for want in &oracle {
        opt64.step(&mut p64, &[Tensor64::full(&[1], 1.0)]).unwrap();
        opt32.step(&mut p32, &[Tensor32::full(&[1], 1.0)]).unwrap();
        adam_err = adam_err
            .max((p64[0].data()[0] - want).abs())
            .max((f64::from(p32[0].data()[0]) - want).abs());
    }
    verdict(
        conv_ok == trials && real_err < 1e-12 && median_ok == 100 && adam_err <= 1e-7,
        format!(
            "conv exact {conv_ok}/{trials} (real-valued 2x1x7x7 max diff {real_err:.1e}), \
             median {median_ok}/100, adam 10-step max diff {adam_err:.1e} (f32 and f64)"
        ),
    )
}

fn criterion_3() -> Verdict {
    let cfg = ModelConfig::deep_captcha_v1(CharsetKind::Numeric, 5, HeadMethod::Softmax);
    let params = init_params::<f32>(&cfg, 3);
    let x = Tensor32::full(&[1, 1, 25, 67], 0.5);
    let cache = forward(&params, &cfg, &x, Mode::Infer, &mut SplitMix64::new(0)).unwrap();
    let maps: Vec<(usize, usize)> = cache.pooled_shapes().iter().map(|s| (s[2], s[3])).collect();
    let flat = cache.flattened_shape()[1];
    let pass = maps == [(12, 33), (6, 16), (3, 8)]
        && flat == 1536
        && cfg.flatten_width() == 1536
        && cache.pooled_shapes()[2][1] == 64;
    verdict(pass, format!("25x67 -> {maps:?}, flatten {flat}"))
}

fn criterion_4() -> Verdict {
    let mut failures = 0;
    let mut checked = 0;
    let num = Charset::numeric();
    for method in [HeadMethod::Softmax, HeadMethod::Sigmoid] {
        let codec = LabelCodec::new(num.clone(), 2, method);
        for a in 0..10 {
            for b in 0..10 {
                let label = num.label(&[a, b]);
                let t: Tensor32 = codec.encode(&label).unwrap();
                failures += usize::from(codec.decode(&t).unwrap().label != label);
                checked += 1;
            }
        }
    }
    let alnum = Charset::alphanumeric();
    let mut rng = SplitMix64::new(4);
    for method in [HeadMethod::Softmax, HeadMethod::Sigmoid] {
        let codec = LabelCodec::new(alnum.clone(), 5, method);
        for _ in 0..10_000 {
            let idx: Vec<usize> = (0..5).map(|_| rng.below(31) as usize).collect();
            let label = alnum.label(&idx);
            let t: Tensor32 = codec.encode(&label).unwrap();
            failures += usize::from(codec.decode(&t).unwrap().label != label);
            checked += 1;
        }
    }
    verdict(failures == 0, format!("{failures} failures in {checked} round trips"))
}

struct LearnSetup {
    train: Dataset,
    test: Dataset,
}

fn learn_config(seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: LEARN_EPOCHS,
        seed,
        ..TrainConfig::default()
    }
}

fn criterion_5(setup: &LearnSetup, ledger: &mut Ledger) -> (Verdict, TrainOutcome) {
    let model = ModelConfig::deep_captcha_v1(CharsetKind::Numeric, LEARN_LENGTH, HeadMethod::Softmax);
    let t = Instant::now();
    let out = train_with(
        &learn_config(HEAD_SEEDS[0]),
        &model,
        &setup.train,
        None,
        progress("softmax seed 1"),
    )
    .expect("training");
    let r = ledger.eval("criterion 5 test", &out, &model, &setup.test);
    let losses: Vec<f64> = out.history.iter().map(|h| h.train_loss).collect();
    let decreasing = losses.windows(2).take(4).all(|w| w[1] < w[0]);
    let min_pos = r.per_position_accuracy.iter().cloned().fold(1.0, f64::min);
    let v = verdict(
        r.whole_accuracy >= 0.85 && min_pos >= 0.94 && decreasing,
        format!(
            "test whole {:.4} (>= 0.85), per-digit {:?} (each >= 0.94), first-5 losses {:?} strictly decreasing: {decreasing}; {:.0}s",
            r.whole_accuracy,
            r.per_position_accuracy.iter().map(|a| (a * 1e4).round() / 1e4).collect::<Vec<_>>(),
            losses.iter().take(5).map(|l| (l * 1e5).round() / 1e5).collect::<Vec<_>>(),
            t.elapsed().as_secs_f64()
        ),
    );
    (v, out)
}

fn criterion_6(setup: &LearnSetup, first_softmax: &TrainOutcome, first_acc: f64, ledger: &mut Ledger) -> Verdict {
    let softmax = ModelConfig::deep_captcha_v1(CharsetKind::Numeric, LEARN_LENGTH, HeadMethod::Softmax);
    let sigmoid = ModelConfig {
        head: HeadMethod::Sigmoid,
        ..softmax.clone()
    };
    let mut wins = 0;
    let mut rows = Vec::new();
    for &seed in &HEAD_SEEDS {
        let soft_acc = if seed == HEAD_SEEDS[0] {
            first_acc
        } else {
            let out = train_with(&learn_config(seed), &softmax, &setup.train, None, progress(&format!("softmax seed {seed}")))
                .expect("training");
            ledger.eval(&format!("criterion 6 softmax seed {seed}"), &out, &softmax, &setup.test).whole_accuracy
        };
        let sig = train_with(&learn_config(seed), &sigmoid, &setup.train, None, progress(&format!("sigmoid seed {seed}")))
            .expect("training");
        if seed == HEAD_SEEDS[0] {
            assert_eq!(sig.order_log, first_softmax.order_log, "heads saw different sample orders");
        }
        let sig_acc = ledger.eval(&format!("criterion 6 sigmoid seed {seed}"), &sig, &sigmoid, &setup.test).whole_accuracy;
        wins += usize::from(soft_acc >= sig_acc);
        rows.push(format!("seed {seed}: softmax {soft_acc:.4} vs sigmoid {sig_acc:.4}"));
    }
    verdict(wins >= 4, format!("softmax >= sigmoid in {wins}/5 [{}]", rows.join("; ")))
}

fn criterion_8(ledger: &mut Ledger) -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path(), 64, &numeric_gen(5), 8008);
    let model = ModelConfig::deep_captcha_v1(CharsetKind::Numeric, 5, HeadMethod::Softmax);
    let cfg = TrainConfig {
        epochs: 200,
        batch_size: 16,
        optimizer: OptimizerConfig::Adam(AdamConfig {
            lr: 1e-3,
            ..AdamConfig::default()
        }),
        seed: 8,
    };
    let out = deep_captcha::train::train(&cfg, &model, &data, None).expect("training");
    let r = ledger.eval("criterion 8 train", &out, &model, &data);
    verdict(
        r.whole_accuracy == 1.0,
        format!(
            "64 five-digit samples, 200 epochs (batch 16, lr 1e-3): training whole accuracy {:.4}, final loss {:.2e}",
            r.whole_accuracy,
            out.history.last().unwrap().train_loss
        ),
    )
}

/// Files produced by one gen -> train -> eval pipeline.
struct PipelineArtifacts {
    manifest: Vec<u8>,
    digest: String,
    history: String,
    checkpoint: Vec<u8>,
    report: String,
}

fn run_pipeline(root: &Path, threads: usize) -> PipelineArtifacts {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    pool.install(|| {
        let cfg = numeric_gen(LEARN_LENGTH);
        let m = generate_dataset(256, &cfg, LabelMode::Uniform, 99, root.join("train")).unwrap();
        generate_dataset(64, &cfg, LabelMode::Uniform, 100, root.join("val")).unwrap();
        let pipe = Pipeline::default();
        let train = Dataset::load(root.join("train"), None, &pipe).unwrap();
        let val = Dataset::load(root.join("val"), None, &pipe).unwrap();
        let model = ModelConfig::deep_captcha_v1(CharsetKind::Numeric, LEARN_LENGTH, HeadMethod::Softmax);
        let tc = TrainConfig {
            epochs: 3,
            batch_size: 32,
            seed: 9,
            ..TrainConfig::default()
        };
        let out = deep_captcha::train::train(&tc, &model, &train, Some(&val)).unwrap();
        let (report, _) = evaluate(&out.params, &model, &val).unwrap();
        PipelineArtifacts {
            manifest: std::fs::read(m.manifest_path()).unwrap(),
            digest: m.digest,
            history: history_csv(&out.history),
            checkpoint: encode_checkpoint(&out.params, &model).unwrap(),
            report: report.to_json(),
        }
    })
}

fn criterion_9() -> Verdict {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let x = run_pipeline(a.path(), 1);
    let y = run_pipeline(b.path(), 3);
    let same = [
        ("manifest", x.manifest == y.manifest),
        ("images", x.digest == y.digest),
        ("history", x.history == y.history),
        ("checkpoint", x.checkpoint == y.checkpoint),
        ("eval report", x.report == y.report),
    ];
    let differing: Vec<&str> = same.iter().filter(|s| !s.1).map(|s| s.0).collect();
    verdict(
        differing.is_empty(),
        format!(
            "two pipelines (1 and 3 worker threads): {}",
            if differing.is_empty() {
                format!("manifest, images, history, checkpoint ({} bytes) and report identical", x.checkpoint.len())
            } else {
                format!("differ in {differing:?}")
            }
        ),
    )
}

fn criterion_10(ledger: &mut Ledger) -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for (length, seed) in [(3usize, 1010u64), (5, 1011)] {
        let dir = tempfile::tempdir().unwrap();
        let data = dataset(dir.path(), 10_000, &numeric_gen(length), seed);
        let model = ModelConfig::deep_captcha_v1(CharsetKind::Numeric, length, HeadMethod::Softmax);
        let untrained = TrainOutcome {
            params: init_params(&model, seed),
            history: Vec::new(),
            order_log: Vec::new(),
        };
        let r = ledger.eval(&format!("criterion 10 L={length}"), &untrained, &model, &data);
        let p = 0.1f64.powi(length as i32);
        let sigma = (p * (1.0 - p) / 10_000.0).sqrt();
        let ok = (r.whole_accuracy - p).abs() <= 3.0 * sigma;
        pass &= ok;
        parts.push(format!(
            "L={length}: {:.5} vs {p:.0e} +/- {:.1e} (3 sigma)",
            r.whole_accuracy,
            3.0 * sigma
        ));
    }
    verdict(pass, parts.join("; "))
}

fn criterion_7(ledger: &Ledger) -> Verdict {
    let bad: Vec<&str> = ledger
        .reports
        .iter()
        .filter(|(_, r)| {
            let min = r.per_position_accuracy.iter().cloned().fold(f64::INFINITY, f64::min);
            r.whole_accuracy > min
        })
        .map(|(n, _)| n.as_str())
        .collect();
    verdict(
        bad.is_empty() && !ledger.reports.is_empty(),
        format!("whole <= min per-position on {} of {} evaluation runs", ledger.reports.len() - bad.len(), ledger.reports.len()),
    )
}

fn guarded(f: impl FnOnce() -> Verdict) -> Verdict {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(v) => v,
        Err(e) => {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            verdict(false, format!("panicked: {msg}"))
        }
    }
}

fn main() {
    let names = [
        "gradient correctness",
        "oracle equivalence",
        "shape reproduction",
        "encoding bijection",
        "desk-scale learning",
        "softmax vs sigmoid heads",
        "whole <= per-position accuracy",
        "overfit sanity",
        "determinism",
        "chance baseline",
    ];
    let mut results: Vec<(usize, Verdict)> = Vec::new();
    let mut report = |id: usize, v: Verdict| {
        println!(
            "criterion {id:>2} [{}] {}: {}",
            if v.pass { "PASS" } else { "FAIL" },
            names[id - 1],
            v.detail
        );
        results.push((id, v));
    };
    let mut ledger = Ledger::default();

    report(1, guarded(criterion_1));
    report(2, guarded(criterion_2));
    report(3, guarded(criterion_3));
    report(4, guarded(criterion_4));

    let dirs = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let setup = catch_unwind(|| {
        let cfg = numeric_gen(LEARN_LENGTH);
        LearnSetup {
            train: dataset(dirs.0.path(), TRAIN_SAMPLES, &cfg, 5001),
            test: dataset(dirs.1.path(), TEST_SAMPLES, &cfg, 5002),
        }
    });
    match setup {
        Ok(setup) => {
            let mut first = None;
            report(
                5,
                guarded(|| {
                    let (v, out) = criterion_5(&setup, &mut ledger);
                    let acc = ledger.reports.last().map(|r| r.1.whole_accuracy).unwrap_or(0.0);
                    first = Some((out, acc));
                    v
                }),
            );
            report(
                6,
                guarded(|| match &first {
                    Some((out, acc)) => criterion_6(&setup, out, *acc, &mut ledger),
                    None => verdict(false, "criterion 5 run did not complete"),
                }),
            );
        }
        Err(_) => {
            report(5, verdict(false, "could not build the learning datasets"));
            report(6, verdict(false, "could not build the learning datasets"));
        }
    }
    drop(dirs);

    let c8 = guarded(|| criterion_8(&mut ledger));
    let c9 = guarded(criterion_9);
    let c10 = guarded(|| criterion_10(&mut ledger));
    report(7, guarded(|| criterion_7(&ledger)));
    report(8, c8);
    report(9, c9);
    report(10, c10);

    let failed: Vec<usize> = results.iter().filter(|r| !r.1.pass).map(|r| r.0).collect();
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", results.len());
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
