use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use deep_captcha::captcha::{generate_dataset, CharsetKind, GenConfig, LabelMode};
use deep_captcha::data::Dataset;
use deep_captcha::eval::evaluate;
use deep_captcha::model::{load_checkpoint, predict, save_checkpoint, HeadMethod, LabelCodec, ModelConfig};
use deep_captcha::optim::{AdamConfig, SgdConfig};
use deep_captcha::pgm::{read_pnm, Pnm};
use deep_captcha::preprocess::{to_gray, Pipeline, SOURCE_HEIGHT, SOURCE_WIDTH};
use deep_captcha::train::{history_csv, train_with, OptimizerConfig, TrainConfig};
use deep_captcha::vuln::vulnerability_report;
use deep_captcha::Error;

const EXIT_USAGE: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_NUMERIC: u8 = 4;

#[derive(Parser)]
#[command(name = "deep-captcha", version, about = "Generate, train on, solve and audit text CAPTCHAs")]
struct Cli {
    /// Worker threads (falls back to DEEP_CAPTCHA_THREADS, then all cores)
    #[arg(long, global = true, env = "DEEP_CAPTCHA_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic CAPTCHA dataset
    Gen(GenArgs),
    /// Train a network on a generated dataset
    Train(TrainArgs),
    /// Report accuracy of a checkpoint on a dataset
    Eval(EvalArgs),
    /// Read the text of a single image
    Solve(SolveArgs),
    /// Break down a checkpoint's errors by glyph properties
    Vuln(VulnArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum CharsetArg {
    Numeric,
    Alnum,
}

impl From<CharsetArg> for CharsetKind {
    fn from(c: CharsetArg) -> Self {
        match c {
            CharsetArg::Numeric => CharsetKind::Numeric,
            CharsetArg::Alnum => CharsetKind::Alphanumeric,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum HeadArg {
    Softmax,
    Sigmoid,
}

#[derive(Clone, Copy, ValueEnum)]
enum OptimizerArg {
    Adam,
    Sgd,
}

#[derive(Args)]
struct GenArgs {
    /// Number of images
    #[arg(long)]
    count: usize,
    /// Characters per image [default: 5, or the --config value]
    #[arg(long)]
    length: Option<usize>,
    /// Symbol set [default: numeric, or the --config value]
    #[arg(long, value_enum)]
    charset: Option<CharsetArg>,
    /// Emit exactly K images per possible label instead of random labels
    #[arg(long, value_name = "K")]
    balanced: Option<usize>,
    /// Master seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    /// Generator settings file (key = value lines)
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Training dataset directory or manifest
    #[arg(long)]
    data: PathBuf,
    /// Validation dataset, evaluated after every epoch
    #[arg(long)]
    val: Option<PathBuf>,
    /// Output head
    #[arg(long, value_enum, default_value = "softmax")]
    head: HeadArg,
    /// Parameter update rule
    #[arg(long, value_enum, default_value = "adam")]
    optimizer: OptimizerArg,
    /// Passes over the training set
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    /// Samples per gradient step
    #[arg(long, default_value_t = 128)]
    batch: usize,
    /// Learning rate [default: 0.0001 for adam, 0.01 for sgd]
    #[arg(long)]
    lr: Option<f64>,
    /// Adam first-moment decay
    #[arg(long, default_value_t = 0.9)]
    beta1: f64,
    /// Adam second-moment decay
    #[arg(long, default_value_t = 0.999)]
    beta2: f64,
    /// Adam denominator stabilizer
    #[arg(long, default_value_t = 1e-8)]
    epsilon: f64,
    /// SGD momentum
    #[arg(long, default_value_t = 0.9)]
    momentum: f64,
    /// Use classical instead of Nesterov momentum with SGD
    #[arg(long)]
    no_nesterov: bool,
    /// Dropout rate after the dense layer
    #[arg(long, default_value_t = 0.3)]
    dropout: f64,
    /// Median filter window (0 disables)
    #[arg(long, default_value_t = 3)]
    median: usize,
    /// Override the charset read from the dataset
    #[arg(long, value_enum)]
    charset: Option<CharsetArg>,
    /// Seed for initialization, shuffling and dropout
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Checkpoint path; history is written next to it as <stem>.history.csv
    #[arg(long, default_value = "model.dcap")]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint to evaluate
    #[arg(long)]
    model: PathBuf,
    /// Dataset directory or manifest
    #[arg(long)]
    data: PathBuf,
    /// Write the confusion matrix as CSV
    #[arg(long)]
    confusion: Option<PathBuf>,
    /// Write the full report as JSON
    #[arg(long)]
    report: Option<PathBuf>,
    /// Median filter window (0 disables)
    #[arg(long, default_value_t = 3)]
    median: usize,
}

#[derive(Args)]
struct SolveArgs {
    /// Checkpoint to use
    #[arg(long)]
    model: PathBuf,
    /// 135x50 PGM (P5) or PPM (P6) image
    #[arg(long)]
    image: PathBuf,
    /// Median filter window (0 disables)
    #[arg(long, default_value_t = 3)]
    median: usize,
}

#[derive(Args)]
struct VulnArgs {
    /// Checkpoint to audit
    #[arg(long)]
    model: PathBuf,
    /// Dataset with glyph metadata in its manifest
    #[arg(long)]
    data: PathBuf,
    /// Write the report as JSON
    #[arg(long)]
    report: Option<PathBuf>,
    /// Median filter window (0 disables)
    #[arg(long, default_value_t = 3)]
    median: usize,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. }
        | Error::Format { .. }
        | Error::BadMagic(_)
        | Error::UnsupportedVersion(_)
        | Error::Truncated { .. }
        | Error::PayloadMismatch { .. }
        | Error::EmptyManifest(_) => EXIT_IO,
        Error::Divergence { .. } => EXIT_NUMERIC,
        _ => EXIT_USAGE,
    }
}

fn pipeline(median: usize) -> deep_captcha::Result<Pipeline> {
    if median != 0 && (median < 3 || median.is_multiple_of(2)) {
        return Err(Error::InvalidArgument(format!("--median {median} must be 0 or an odd number >= 3")));
    }
    Ok(Pipeline {
        median_window: (median != 0).then_some(median),
        ..Pipeline::default()
    })
}

fn write_file(path: &Path, contents: &str) -> deep_captcha::Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn gen(a: GenArgs) -> deep_captcha::Result<()> {
    let mut cfg = match &a.config {
        Some(p) => GenConfig::load(p)?,
        None => GenConfig::default(),
    };
    if let Some(l) = a.length {
        cfg.length = l;
    }
    if let Some(c) = a.charset {
        cfg.charset = c.into();
    }
    cfg.validate()?;
    let mode = match a.balanced {
        Some(k) => LabelMode::Balanced { k },
        None => LabelMode::Uniform,
    };
    let t = Instant::now();
    let m = generate_dataset(a.count, &cfg, mode, a.seed, &a.out)?;
    eprintln!("rendered {} images in {:.1?}", m.entries.len(), t.elapsed());
    println!("manifest {}", m.manifest_path().display());
    println!("digest {}", m.digest);
    Ok(())
}

fn history_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "model".into());
    out.with_file_name(format!("{stem}.history.csv"))
}

fn train(a: TrainArgs) -> deep_captcha::Result<()> {
    let pipe = pipeline(a.median)?;
    let optimizer = match a.optimizer {
        OptimizerArg::Adam => OptimizerConfig::Adam(AdamConfig {
            lr: a.lr.unwrap_or(1e-4),
            beta1: a.beta1,
            beta2: a.beta2,
            epsilon: a.epsilon,
        }),
        OptimizerArg::Sgd => OptimizerConfig::Sgd(SgdConfig {
            lr: a.lr.unwrap_or(0.01),
            momentum: a.momentum,
            nesterov: !a.no_nesterov,
        }),
    };
    if let OptimizerConfig::Adam(c) = optimizer {
        if !(0.0..1.0).contains(&c.beta1) || !(0.0..1.0).contains(&c.beta2) || c.epsilon.is_nan() || c.epsilon <= 0.0 {
            return Err(Error::InvalidArgument("beta1, beta2 must be in [0, 1) and epsilon > 0".into()));
        }
    }
    let tc = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch,
        optimizer,
        seed: a.seed,
    };
    tc.validate()?;
    if !(0.0..1.0).contains(&a.dropout) {
        return Err(Error::InvalidArgument(format!("--dropout {} outside [0, 1)", a.dropout)));
    }

    let t = Instant::now();
    let data = Dataset::load(&a.data, a.charset.map(Into::into), &pipe)?;
    let val = a
        .val
        .as_ref()
        .map(|v| Dataset::load(v, Some(data.charset.kind()), &pipe))
        .transpose()?;
    eprintln!("loaded {} training samples in {:.1?}", data.len(), t.elapsed());

    let head = match a.head {
        HeadArg::Softmax => HeadMethod::Softmax,
        HeadArg::Sigmoid => HeadMethod::Sigmoid,
    };
    let model = ModelConfig {
        dropout: a.dropout,
        ..ModelConfig::deep_captcha_v1(data.charset.kind(), data.length, head)
    };
    let t = Instant::now();
    let out = train_with(&tc, &model, &data, val.as_ref(), |r| {
        let val = match (r.val_loss, r.val_acc) {
            (Some(l), Some(acc)) => format!(" val_loss {l:.5} val_acc {acc:.4}"),
            _ => String::new(),
        };
        eprintln!(
            "epoch {:>3} train_loss {:.5} train_acc {:.4}{val} ({:.0?})",
            r.epoch,
            r.train_loss,
            r.train_acc,
            t.elapsed()
        );
    })?;
    save_checkpoint(&out.params, &model, &a.out)?;
    let hist = history_path(&a.out);
    write_file(&hist, &history_csv(&out.history))?;
    println!("checkpoint {}", a.out.display());
    println!("history {}", hist.display());
    Ok(())
}

fn eval(a: EvalArgs) -> deep_captcha::Result<()> {
    let (params, model) = load_checkpoint(&a.model)?;
    let data = Dataset::load(&a.data, None, &pipeline(a.median)?)?;
    let (report, _) = evaluate(&params, &model, &data)?;
    println!("samples {}", report.samples);
    println!("whole_accuracy {:.6}", report.whole_accuracy);
    for (i, acc) in report.per_position_accuracy.iter().enumerate() {
        println!("position_{} {:.6}", i + 1, acc);
    }
    println!("loss {:.6}", report.loss);
    if let Some(p) = &a.confusion {
        write_file(p, &report.confusion_csv())?;
    }
    if let Some(p) = &a.report {
        write_file(p, &report.to_json())?;
    }
    Ok(())
}

fn solve(a: SolveArgs) -> deep_captcha::Result<()> {
    let (params, model) = load_checkpoint(&a.model)?;
    let kind = model
        .charset
        .ok_or_else(|| Error::InvalidArgument("checkpoint has no charset".into()))?;
    let img = match read_pnm(&a.image)? {
        Pnm::Gray(g) => g,
        Pnm::Rgb(c) => to_gray(&c)?,
    };
    if (img.width, img.height) != (SOURCE_WIDTH, SOURCE_HEIGHT) {
        return Err(Error::InvalidArgument(format!(
            "image is {}x{}, expected {SOURCE_WIDTH}x{SOURCE_HEIGHT}",
            img.width, img.height
        )));
    }
    let x = pipeline(a.median)?.tensor::<f32>(&img)?;
    let out = predict(&params, &model, &x)?;
    let codec = LabelCodec::new(deep_captcha::captcha::Charset::new(kind), model.length, model.head);
    let d = codec.decode(&out)?;
    println!("{}", d.label);
    let conf: Vec<String> = d.confidence.iter().map(|c| format!("{c:.4}")).collect();
    println!("confidence {}", conf.join(" "));
    Ok(())
}

fn vuln(a: VulnArgs) -> deep_captcha::Result<()> {
    let (params, model) = load_checkpoint(&a.model)?;
    let data = Dataset::load(&a.data, None, &pipeline(a.median)?)?;
    if data.glyphs().is_none() {
        return Err(Error::MissingGlyphMeta);
    }
    let report = vulnerability_report(&params, &model, &data)?;
    print!("{}", report.summary());
    if let Some(p) = &a.report {
        write_file(p, &report.to_json())?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be >= 1");
            return ExitCode::from(EXIT_USAGE);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    let result = match cli.command {
        Command::Gen(a) => gen(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Solve(a) => solve(a),
        Command::Vuln(a) => vuln(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
