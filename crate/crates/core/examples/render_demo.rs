//! Writes a handful of sample CAPTCHAs to a directory for eyeballing.

use deep_captcha::captcha::{generate_dataset, GenConfig, LabelMode};

fn main() {
    let out = std::env::args().nth(1).unwrap_or_else(|| "samples".into());
    let cfg = GenConfig::default();
    let m = generate_dataset(8, &cfg, LabelMode::Uniform, 1, &out).unwrap();
    println!("{}", m.digest);
}
