//! Failure analysis: joins per-position errors with the generator's glyph
//! metadata.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::captcha::{Charset, GlyphMeta};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::eval::predict_dataset;
use crate::model::{ModelConfig, ModelParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub name: String,
    pub glyphs: u64,
    pub errors: u64,
    /// `errors / glyphs` (0 for an empty bucket).
    pub error_rate: f64,
    /// `errors / all misclassified glyphs` (0 when there are none).
    pub error_share: f64,
}

/// Shares of misclassified glyphs matching each known weakness.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Headlines {
    /// Mean gray value of the pepper-noise dots used for `faint_share`.
    pub noise_gray_mean: f64,
    /// Glyph drawn lighter (higher gray value) than the mean noise dot.
    pub faint_share: f64,
    /// True symbol is 3, 8 or 9.
    pub digits_389_share: f64,
    /// `|rotation| >= 10` degrees.
    pub rotated_10_share: f64,
    /// Errors that confuse 1 and 7 in either direction.
    pub one_seven_share: f64,
    /// Of the 7-read-as-1 errors, those with more than 20 degrees of
    /// counter-clockwise rotation.
    pub seven_ccw20_share: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VulnReport {
    pub samples: usize,
    pub glyphs: u64,
    pub misclassified_glyphs: u64,
    pub misclassified_samples: u64,
    pub by_rotation: Vec<Bucket>,
    /// Empirical quartiles of glyph gray level over the whole dataset.
    pub by_gray_quartile: Vec<Bucket>,
    pub by_symbol: Vec<Bucket>,
    pub by_overlap: Vec<Bucket>,
    pub headlines: Headlines,
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

fn buckets(names: Vec<String>, glyphs: Vec<u64>, errors: Vec<u64>, total_errors: u64) -> Vec<Bucket> {
    names
        .into_iter()
        .zip(glyphs.into_iter().zip(errors))
        .map(|(name, (g, e))| Bucket {
            name,
            glyphs: g,
            errors: e,
            error_rate: ratio(e, g),
            error_share: ratio(e, total_errors),
        })
        .collect()
}

fn rotation_band(deg: f64) -> usize {
    let a = deg.abs();
    if a < 10.0 {
        0
    } else if a <= 20.0 {
        1
    } else {
        2
    }
}

/// Builds the report from flat `samples * L` truth and prediction indices.
pub fn vulnerability_from_predictions(
    charset: &Charset,
    glyphs: &[&[GlyphMeta]],
    truth: &[usize],
    predicted: &[usize],
    noise_gray_mean: f64,
) -> Result<VulnReport> {
    let samples = glyphs.len();
    if samples == 0 || truth.len() != predicted.len() || !truth.len().is_multiple_of(samples) {
        return Err(Error::shape("vulnerability", "prediction count", truth.len(), predicted.len()));
    }
    let length = truth.len() / samples;
    if glyphs.iter().any(|g| g.len() != length) {
        return Err(Error::MissingGlyphMeta);
    }
    let d = charset.len();

    let mut grays: Vec<u8> = glyphs.iter().flat_map(|g| g.iter().map(|m| m.gray_level)).collect();
    grays.sort_unstable();
    let n = grays.len();
    let cuts = [grays[n / 4], grays[n / 2], grays[3 * n / 4]];
    let quartile = |g: u8| cuts.iter().filter(|&&c| g >= c).count().min(3);

    let mut rot = ([0u64; 3], [0u64; 3]);
    let mut gray = ([0u64; 4], [0u64; 4]);
    let mut sym = (vec![0u64; d], vec![0u64; d]);
    let mut ovl = ([0u64; 2], [0u64; 2]);
    let (mut errors, mut bad_samples) = (0u64, 0u64);
    let (mut faint, mut hard, mut rotated, mut one_seven, mut seven_as_one, mut seven_ccw) = (0u64, 0, 0, 0, 0, 0);
    let one = charset.index_of('1');
    let seven = charset.index_of('7');
    let hard_digits: Vec<usize> = ['3', '8', '9'].iter().filter_map(|&c| charset.index_of(c)).collect();

    for (s, metas) in glyphs.iter().enumerate() {
        let mut sample_bad = false;
        for (p, m) in metas.iter().enumerate() {
            let (t, y) = (truth[s * length + p], predicted[s * length + p]);
            let wrong = u64::from(t != y);
            let (r, q, o) = (rotation_band(m.rotation_deg), quartile(m.gray_level), usize::from(m.overlaps_neighbor));
            rot.0[r] += 1;
            rot.1[r] += wrong;
            gray.0[q] += 1;
            gray.1[q] += wrong;
            sym.0[t] += 1;
            sym.1[t] += wrong;
            ovl.0[o] += 1;
            ovl.1[o] += wrong;
            if t == y {
                continue;
            }
            sample_bad = true;
            errors += 1;
            faint += u64::from(f64::from(m.gray_level) > noise_gray_mean);
            hard += u64::from(hard_digits.contains(&t));
            rotated += u64::from(m.rotation_deg.abs() >= 10.0);
            if let (Some(a), Some(b)) = (one, seven) {
                if (t, y) == (a, b) || (t, y) == (b, a) {
                    one_seven += 1;
                }
                if (t, y) == (b, a) {
                    seven_as_one += 1;
                    seven_ccw += u64::from(m.rotation_deg > 20.0);
                }
            }
        }
        bad_samples += u64::from(sample_bad);
    }

    let q_names = (0..4)
        .map(|i| {
            let lo = if i == 0 { 0 } else { cuts[i - 1] };
            let hi = if i == 3 { 255 } else { cuts[i] };
            format!("Q{} [{lo}, {hi})", i + 1)
        })
        .collect();
    Ok(VulnReport {
        samples,
        glyphs: n as u64,
        misclassified_glyphs: errors,
        misclassified_samples: bad_samples,
        by_rotation: buckets(
            vec!["<10".into(), "10-20".into(), ">20".into()],
            rot.0.to_vec(),
            rot.1.to_vec(),
            errors,
        ),
        by_gray_quartile: buckets(q_names, gray.0.to_vec(), gray.1.to_vec(), errors),
        by_symbol: buckets(
            charset.symbols().iter().map(|c| c.to_string()).collect(),
            sym.0,
            sym.1,
            errors,
        ),
        by_overlap: buckets(
            vec!["separate".into(), "overlapping".into()],
            ovl.0.to_vec(),
            ovl.1.to_vec(),
            errors,
        ),
        headlines: Headlines {
            noise_gray_mean,
            faint_share: ratio(faint, errors),
            digits_389_share: ratio(hard, errors),
            rotated_10_share: ratio(rotated, errors),
            one_seven_share: ratio(one_seven, errors),
            seven_ccw20_share: ratio(seven_ccw, seven_as_one),
        },
    })
}

/// Runs the model over `data` and analyses its errors. The noise reference
/// comes from the dataset's stored generator config, or the defaults.
pub fn vulnerability_report(params: &ModelParams<f32>, cfg: &ModelConfig, data: &Dataset) -> Result<VulnReport> {
    let glyphs = data.glyphs().ok_or(Error::MissingGlyphMeta)?;
    let gen = crate::captcha::read_dataset_config(&data.dir)?.unwrap_or_default();
    let preds = predict_dataset(params, cfg, data)?;
    vulnerability_from_predictions(&data.charset, &glyphs, &data.targets, &preds.indices, gen.dot_gray_mean())
}

impl VulnReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Plain-text table for terminals.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{} misclassified glyphs in {} of {} samples ({} glyphs total)",
            self.misclassified_glyphs, self.misclassified_samples, self.samples, self.glyphs
        );
        if self.misclassified_glyphs == 0 {
            let _ = writeln!(s, "zero misclassifications");
            return s;
        }
        for (title, rows) in [
            ("rotation |deg|", &self.by_rotation),
            ("gray level", &self.by_gray_quartile),
            ("overlap", &self.by_overlap),
            ("symbol", &self.by_symbol),
        ] {
            let _ = writeln!(s, "\n{title:<16} {:>8} {:>8} {:>8} {:>8}", "glyphs", "errors", "rate", "share");
            for b in rows.iter().filter(|b| b.glyphs > 0) {
                let _ = writeln!(
                    s,
                    "{:<16} {:>8} {:>8} {:>8.4} {:>8.4}",
                    b.name, b.glyphs, b.errors, b.error_rate, b.error_share
                );
            }
        }
        let h = &self.headlines;
        let _ = writeln!(s, "\nlighter than mean noise dot ({:.1}): {:.1}%", h.noise_gray_mean, 100.0 * h.faint_share);
        let _ = writeln!(s, "true symbol 3, 8 or 9:            {:.1}%", 100.0 * h.digits_389_share);
        let _ = writeln!(s, "rotated 10 degrees or more:       {:.1}%", 100.0 * h.rotated_10_share);
        let _ = writeln!(s, "1/7 confusions:                   {:.1}%", 100.0 * h.one_seven_share);
        let _ = writeln!(s, "7 read as 1 with >20 deg CCW:     {:.1}%", 100.0 * h.seven_ccw20_share);
        s
    }
}
