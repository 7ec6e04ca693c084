//! Deterministic CAPTCHA renderer.
//!
//! Pipeline: white canvas, glyphs (random case, rotation, scale, gray level,
//! jittered slot), one or more crossing curves, then pepper noise.

use serde::{Deserialize, Serialize};

use super::atlas::{Atlas, Glyph};
use super::charset::Charset;
use super::config::{GenConfig, IMAGE_HEIGHT, IMAGE_WIDTH};
use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::rng::SplitMix64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RenderedCase {
    #[serde(rename = "upper")]
    Upper,
    #[serde(rename = "lower")]
    Lower,
    #[serde(rename = "n/a")]
    NotApplicable,
}

/// Ground truth for one rendered glyph.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlyphMeta {
    pub symbol: char,
    /// Signed degrees; positive is counter-clockwise on screen.
    pub rotation_deg: f64,
    pub gray_level: u8,
    /// Top-left corner of the unrotated, scaled glyph cell.
    pub x_offset: i32,
    pub y_offset: i32,
    pub scale: f64,
    pub rendered_case: RenderedCase,
    /// Bounding box intersects a neighbouring glyph's.
    #[serde(default)]
    pub overlaps_neighbor: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CaptchaSample {
    pub image: GrayImage,
    pub label: String,
    pub glyphs: Vec<GlyphMeta>,
    pub seed: u64,
    /// Pepper-noise dots drawn.
    pub dot_count: usize,
}

/// Axis-aligned extent of a placed glyph, in pixels.
#[derive(Clone, Copy, Debug)]
struct Placement {
    cx: f64,
    cy: f64,
    half_w: f64,
    half_h: f64,
}

impl Placement {
    fn intersects(&self, other: &Placement) -> bool {
        (self.cx - other.cx).abs() < self.half_w + other.half_w
            && (self.cy - other.cy).abs() < self.half_h + other.half_h
    }
}

/// Bilinear coverage lookup with zero outside the bitmap.
fn sample_coverage(g: &Glyph, x: f64, y: f64) -> f64 {
    let x0 = x.floor();
    let y0 = y.floor();
    let (fx, fy) = (x - x0, y - y0);
    let at = |xi: f64, yi: f64| -> f64 {
        if xi < 0.0 || yi < 0.0 || xi >= g.width as f64 || yi >= g.height as f64 {
            0.0
        } else {
            g.at(xi as usize, yi as usize) as f64
        }
    };
    let top = at(x0, y0) * (1.0 - fx) + at(x0 + 1.0, y0) * fx;
    let bottom = at(x0, y0 + 1.0) * (1.0 - fx) + at(x0 + 1.0, y0 + 1.0) * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Composites `glyph` centred at `(cx, cy)`, rotated counter-clockwise by
/// `rotation_deg` and scaled by `scale`, blending towards `gray`.
pub(crate) fn draw_glyph(
    img: &mut GrayImage,
    glyph: &Glyph,
    cx: f64,
    cy: f64,
    rotation_deg: f64,
    scale: f64,
    gray: u8,
) {
    let theta = rotation_deg.to_radians();
    let (sin, cos) = (libm::sin(theta), libm::cos(theta));
    let (gw, gh) = (glyph.width as f64, glyph.height as f64);
    let radius = scale * libm::sqrt(gw * gw + gh * gh) / 2.0 + 1.0;
    let x_lo = (cx - radius).floor().max(0.0) as usize;
    let y_lo = (cy - radius).floor().max(0.0) as usize;
    let x_hi = ((cx + radius).ceil() as usize).min(img.width);
    let y_hi = ((cy + radius).ceil() as usize).min(img.height);
    let g = gray as f64;
    for y in y_lo..y_hi {
        for x in x_lo..x_hi {
            let dx = x as f64 + 0.5 - cx;
            let dy = y as f64 + 0.5 - cy;
            // inverse of the on-screen (y-down) counter-clockwise rotation
            let ux = dx * cos - dy * sin;
            let uy = dx * sin + dy * cos;
            let sx = ux / scale + gw / 2.0 - 0.5;
            let sy = uy / scale + gh / 2.0 - 0.5;
            let a = sample_coverage(glyph, sx, sy);
            if a <= 0.0 {
                continue;
            }
            let p = img.get(x, y) as f64;
            let blended = p + (g - p) * (a / 255.0);
            img.darken(x, y, blended.round().clamp(0.0, 255.0) as u8);
        }
    }
}

/// Stamps a `width x width` square centred on `(x, y)`.
fn stamp(img: &mut GrayImage, x: f64, y: f64, width: usize, gray: u8) {
    let half = width as f64 / 2.0;
    let x0 = (x - half).round() as i64;
    let y0 = (y - half).round() as i64;
    for yy in y0..y0 + width as i64 {
        for xx in x0..x0 + width as i64 {
            if xx >= 0 && yy >= 0 && (xx as usize) < img.width && (yy as usize) < img.height {
                img.darken(xx as usize, yy as usize, gray);
            }
        }
    }
}

/// A wavy polyline across the text band; every segment is at most
/// `max_segment` pixels long.
fn draw_curve(img: &mut GrayImage, rng: &mut SplitMix64, cfg: &GenConfig, max_segment: f64) {
    let gray = rng.range_i64(cfg.curve_gray_min as i64, cfg.curve_gray_max as i64) as u8;
    let x_start = rng.uniform(cfg.margin as f64, IMAGE_WIDTH as f64 * 0.25);
    let x_end = rng.uniform(IMAGE_WIDTH as f64 * 0.75, (IMAGE_WIDTH - cfg.margin) as f64);
    let y_mid = rng.uniform(IMAGE_HEIGHT as f64 * 0.3, IMAGE_HEIGHT as f64 * 0.7);
    let amplitude = rng.uniform(2.0, IMAGE_HEIGHT as f64 * 0.2);
    let period = rng.uniform(30.0, 90.0);
    let phase = rng.uniform(0.0, 2.0 * std::f64::consts::PI);

    let step = (max_segment * 0.8).max(1.0);
    let max_rise = libm::sqrt(max_segment * max_segment - step * step);
    let mut points = Vec::new();
    let mut x = x_start;
    let mut prev_y: Option<f64> = None;
    while x <= x_end {
        let mut y = y_mid + amplitude * libm::sin(2.0 * std::f64::consts::PI * x / period + phase);
        if let Some(py) = prev_y {
            y = y.clamp(py - max_rise, py + max_rise);
        }
        points.push((x, y));
        prev_y = Some(y);
        x += step;
    }
    for pair in points.windows(2) {
        let ((x0, y0), (x1, y1)) = (pair[0], pair[1]);
        let len = libm::sqrt((x1 - x0).powi(2) + (y1 - y0).powi(2));
        let steps = (len * 4.0).ceil().max(1.0) as usize;
        for i in 0..=steps {
            let t = i as f64 / steps as f64;
            stamp(img, x0 + (x1 - x0) * t, y0 + (y1 - y0) * t, cfg.curve_width, gray);
        }
    }
}

/// Renders `label` deterministically from `(label, config, seed)`.
pub fn render_sample(label: &str, cfg: &GenConfig, seed: u64) -> Result<CaptchaSample> {
    cfg.validate()?;
    let charset = Charset::new(cfg.charset);
    let len = label.chars().count();
    if len != cfg.length {
        return Err(Error::LabelLength {
            label: label.to_string(),
            expected: cfg.length,
            actual: len,
        });
    }
    let indices = charset.indices(label)?;
    let label = charset.label(&indices);

    let atlas = Atlas::embedded();
    let mut rng = SplitMix64::new(seed);
    let mut img = GrayImage::filled(IMAGE_WIDTH, IMAGE_HEIGHT, 255);
    let slot_w = (IMAGE_WIDTH - 2 * cfg.margin) as f64 / cfg.length as f64;

    let mut glyphs = Vec::with_capacity(cfg.length);
    let mut placements = Vec::with_capacity(cfg.length);
    let mut width_sum = 0.0;
    for (i, symbol) in label.chars().enumerate() {
        let (ch, case) = if symbol.is_ascii_alphabetic() {
            if rng.bernoulli(cfg.upper_case_prob) {
                (symbol.to_ascii_uppercase(), RenderedCase::Upper)
            } else {
                (symbol, RenderedCase::Lower)
            }
        } else {
            (symbol, RenderedCase::NotApplicable)
        };
        let glyph = atlas
            .glyph(ch)
            .ok_or(Error::UnknownSymbol { symbol: ch, charset: "glyph atlas" })?;
        let rotation = if cfg.rotation_max_deg > 0.0 {
            rng.uniform(-cfg.rotation_max_deg, cfg.rotation_max_deg)
        } else {
            0.0
        };
        let scale = if cfg.scale_max > cfg.scale_min {
            rng.uniform(cfg.scale_min, cfg.scale_max)
        } else {
            cfg.scale_min
        };
        let gray = rng.range_i64(cfg.gray_min as i64, cfg.gray_max as i64) as u8;
        let jx = rng.range_i64(-cfg.x_jitter, cfg.x_jitter);
        let jy = rng.range_i64(-cfg.y_jitter, cfg.y_jitter);

        let (sw, sh) = (glyph.width as f64 * scale, glyph.height as f64 * scale);
        let slot_centre = cfg.margin as f64 + slot_w * (i as f64 + 0.5);
        let x_offset = (slot_centre - sw / 2.0).round() as i64 + jx;
        let y_offset = ((IMAGE_HEIGHT as f64 - sh) / 2.0).round() as i64 + jy;
        let cx = x_offset as f64 + sw / 2.0;
        let cy = y_offset as f64 + sh / 2.0;
        draw_glyph(&mut img, glyph, cx, cy, rotation, scale, gray);

        let theta = rotation.to_radians();
        let (s, c) = (libm::sin(theta).abs(), libm::cos(theta).abs());
        placements.push(Placement {
            cx,
            cy,
            half_w: (sw * c + sh * s) / 2.0,
            half_h: (sw * s + sh * c) / 2.0,
        });
        width_sum += sw;
        glyphs.push(GlyphMeta {
            symbol,
            rotation_deg: rotation,
            gray_level: gray,
            x_offset: x_offset as i32,
            y_offset: y_offset as i32,
            scale,
            rendered_case: case,
            overlaps_neighbor: false,
        });
    }
    for i in 0..glyphs.len() {
        let left = i > 0 && placements[i].intersects(&placements[i - 1]);
        let right = i + 1 < glyphs.len() && placements[i].intersects(&placements[i + 1]);
        glyphs[i].overlaps_neighbor = left || right;
    }

    let glyph_width = width_sum / cfg.length as f64;
    for _ in 0..cfg.curve_count {
        draw_curve(&mut img, &mut rng, cfg, glyph_width);
    }

    let dot_count = if cfg.dot_mean > 0.0 || cfg.dot_std > 0.0 {
        (cfg.dot_mean + cfg.dot_std * rng.gaussian()).round().max(0.0) as usize
    } else {
        0
    };
    for _ in 0..dot_count {
        let x = rng.below(IMAGE_WIDTH as u64) as usize;
        let y = rng.below(IMAGE_HEIGHT as u64) as usize;
        let size = 1 + rng.below(cfg.dot_size_max as u64) as usize;
        let gray = rng.range_i64(cfg.dot_gray_min as i64, cfg.dot_gray_max as i64) as u8;
        for yy in y..(y + size).min(IMAGE_HEIGHT) {
            for xx in x..(x + size).min(IMAGE_WIDTH) {
                img.darken(xx, yy, gray);
            }
        }
    }

    Ok(CaptchaSample {
        image: img,
        label,
        glyphs,
        seed,
        dot_count,
    })
}
