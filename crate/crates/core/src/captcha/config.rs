//! Generator configuration, persisted as flat `key = value` text.

use std::fmt::Write as _;
use std::path::Path;

use super::charset::CharsetKind;
use crate::error::{Error, Result};

pub const IMAGE_WIDTH: usize = 135;
pub const IMAGE_HEIGHT: usize = 50;
pub const MAX_LENGTH: usize = 8;

/// Every knob of the renderer.
#[derive(Clone, Debug, PartialEq)]
pub struct GenConfig {
    pub charset: CharsetKind,
    pub length: usize,
    /// Glyph rotation is uniform in `[-rotation_max_deg, +rotation_max_deg]`.
    pub rotation_max_deg: f64,
    pub scale_min: f64,
    pub scale_max: f64,
    /// Glyph gray level is uniform over this inclusive range (0 = black).
    pub gray_min: u8,
    pub gray_max: u8,
    /// Probability that a letter is drawn upper-case (alphanumeric only).
    pub upper_case_prob: f64,
    /// Left/right padding before glyph slots start.
    pub margin: usize,
    pub x_jitter: i64,
    pub y_jitter: i64,
    pub curve_count: usize,
    pub curve_width: usize,
    pub curve_gray_min: u8,
    pub curve_gray_max: u8,
    /// Dot count per image ~ round(N(dot_mean, dot_std)), clamped at 0.
    pub dot_mean: f64,
    pub dot_std: f64,
    pub dot_size_max: usize,
    pub dot_gray_min: u8,
    pub dot_gray_max: u8,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            charset: CharsetKind::Numeric,
            length: 5,
            rotation_max_deg: 30.0,
            scale_min: 0.8,
            scale_max: 1.2,
            gray_min: 0,
            gray_max: 160,
            upper_case_prob: 0.5,
            margin: 8,
            x_jitter: 2,
            y_jitter: 3,
            curve_count: 1,
            curve_width: 2,
            curve_gray_min: 40,
            curve_gray_max: 140,
            dot_mean: 40.0,
            dot_std: 10.0,
            dot_size_max: 2,
            dot_gray_min: 110,
            dot_gray_max: 190,
        }
    }
}

impl GenConfig {
    /// No rotation, scaling, jitter, curves or dots.
    pub fn clean() -> Self {
        Self {
            rotation_max_deg: 0.0,
            scale_min: 1.0,
            scale_max: 1.0,
            x_jitter: 0,
            y_jitter: 0,
            curve_count: 0,
            dot_mean: 0.0,
            dot_std: 0.0,
            ..Self::default()
        }
    }

    /// Mean gray value of pepper-noise dots.
    pub fn dot_gray_mean(&self) -> f64 {
        (self.dot_gray_min as f64 + self.dot_gray_max as f64) / 2.0
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(1..=MAX_LENGTH).contains(&self.length) {
            return bad(format!("length {} outside [1, {MAX_LENGTH}]", self.length));
        }
        if !(self.rotation_max_deg >= 0.0 && self.rotation_max_deg <= 180.0) {
            return bad(format!("rotation_max_deg {} outside [0, 180]", self.rotation_max_deg));
        }
        if !(self.scale_min > 0.0 && self.scale_min <= self.scale_max && self.scale_max <= 1.6) {
            return bad(format!(
                "scale range [{}, {}] must satisfy 0 < min <= max <= 1.6",
                self.scale_min, self.scale_max
            ));
        }
        for (name, lo, hi) in [
            ("gray", self.gray_min, self.gray_max),
            ("curve_gray", self.curve_gray_min, self.curve_gray_max),
            ("dot_gray", self.dot_gray_min, self.dot_gray_max),
        ] {
            if lo > hi {
                return bad(format!("{name}_min {lo} > {name}_max {hi}"));
            }
        }
        if !(0.0..=1.0).contains(&self.upper_case_prob) {
            return bad(format!("upper_case_prob {} outside [0, 1]", self.upper_case_prob));
        }
        if 2 * self.margin >= IMAGE_WIDTH {
            return bad(format!("margin {} leaves no room for glyphs", self.margin));
        }
        if self.x_jitter < 0 || self.y_jitter < 0 {
            return bad("jitter must be non-negative".into());
        }
        if self.curve_count > 0 && self.curve_width == 0 {
            return bad("curve_width must be >= 1".into());
        }
        if !(self.dot_mean >= 0.0 && self.dot_std >= 0.0 && self.dot_mean.is_finite() && self.dot_std.is_finite()) {
            return bad("dot_mean and dot_std must be finite and non-negative".into());
        }
        if self.dot_size_max == 0 || self.dot_size_max > 4 {
            return bad(format!("dot_size_max {} outside [1, 4]", self.dot_size_max));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("charset", self.charset.name().to_string());
        kv("length", self.length.to_string());
        kv("rotation_max_deg", self.rotation_max_deg.to_string());
        kv("scale_min", self.scale_min.to_string());
        kv("scale_max", self.scale_max.to_string());
        kv("gray_min", self.gray_min.to_string());
        kv("gray_max", self.gray_max.to_string());
        kv("upper_case_prob", self.upper_case_prob.to_string());
        kv("margin", self.margin.to_string());
        kv("x_jitter", self.x_jitter.to_string());
        kv("y_jitter", self.y_jitter.to_string());
        kv("curve_count", self.curve_count.to_string());
        kv("curve_width", self.curve_width.to_string());
        kv("curve_gray_min", self.curve_gray_min.to_string());
        kv("curve_gray_max", self.curve_gray_max.to_string());
        kv("dot_mean", self.dot_mean.to_string());
        kv("dot_std", self.dot_std.to_string());
        kv("dot_size_max", self.dot_size_max.to_string());
        kv("dot_gray_min", self.dot_gray_min.to_string());
        kv("dot_gray_max", self.dot_gray_max.to_string());
        s
    }

    /// Parses `key = value` lines over the defaults. Blank lines and `#`
    /// comments are ignored; unknown keys are errors.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::format("gen config", format!("line {}: expected key = value", lineno + 1))
            })?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| Error::format("gen config", format!("line {}: {e}", lineno + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn p<T: std::str::FromStr>(key: &str, v: &str) -> std::result::Result<T, String> {
            v.parse().map_err(|_| format!("bad value {v:?} for {key}"))
        }
        match key {
            "charset" => self.charset = CharsetKind::parse(value).map_err(|e| e.to_string())?,
            "length" => self.length = p(key, value)?,
            "rotation_max_deg" => self.rotation_max_deg = p(key, value)?,
            "scale_min" => self.scale_min = p(key, value)?,
            "scale_max" => self.scale_max = p(key, value)?,
            "gray_min" => self.gray_min = p(key, value)?,
            "gray_max" => self.gray_max = p(key, value)?,
            "upper_case_prob" => self.upper_case_prob = p(key, value)?,
            "margin" => self.margin = p(key, value)?,
            "x_jitter" => self.x_jitter = p(key, value)?,
            "y_jitter" => self.y_jitter = p(key, value)?,
            "curve_count" => self.curve_count = p(key, value)?,
            "curve_width" => self.curve_width = p(key, value)?,
            "curve_gray_min" => self.curve_gray_min = p(key, value)?,
            "curve_gray_max" => self.curve_gray_max = p(key, value)?,
            "dot_mean" => self.dot_mean = p(key, value)?,
            "dot_std" => self.dot_std = p(key, value)?,
            "dot_size_max" => self.dot_size_max = p(key, value)?,
            "dot_gray_min" => self.dot_gray_min = p(key, value)?,
            "dot_gray_max" => self.dot_gray_max = p(key, value)?,
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }
}
