//! Network input pipeline: gray conversion, 135x50 -> 67x25 area resize,
//! median filtering and normalization to `[0, 1]`.

use crate::error::{Error, Result};
use crate::image::{ColorImage, GrayImage};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const SOURCE_WIDTH: usize = 135;
pub const SOURCE_HEIGHT: usize = 50;
pub const INPUT_WIDTH: usize = 67;
pub const INPUT_HEIGHT: usize = 25;

/// ITU-R BT.601 luma, rounded and clamped.
pub fn to_gray(img: &ColorImage) -> Result<GrayImage> {
    if img.channels != 3 {
        return Err(Error::InvalidArgument(format!(
            "to_gray expects 3 channels, got {}",
            img.channels
        )));
    }
    let pixels = img
        .data
        .chunks_exact(3)
        .map(|p| {
            let y = 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64;
            y.round().clamp(0.0, 255.0) as u8
        })
        .collect();
    GrayImage::new(img.width, img.height, pixels)
}

/// Overlap of source cells with one output cell along an axis: `(index, weight)`.
fn axis_weights(src: usize, dst: usize) -> Vec<Vec<(usize, f64)>> {
    let ratio = src as f64 / dst as f64;
    (0..dst)
        .map(|o| {
            let lo = o as f64 * ratio;
            let hi = (o + 1) as f64 * ratio;
            let first = lo.floor() as usize;
            let last = (hi.ceil() as usize).min(src);
            (first..last)
                .filter_map(|s| {
                    let w = (hi.min(s as f64 + 1.0) - lo.max(s as f64)) / ratio;
                    (w > 0.0).then_some((s, w))
                })
                .collect()
        })
        .collect()
}

/// Area-average resampling to arbitrary dimensions: every output pixel is the
/// mean of the source rectangle it covers, with fractional edge cells weighted.
pub fn resize_area(img: &GrayImage, width: usize, height: usize) -> Result<GrayImage> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidArgument("resize target must be non-empty".into()));
    }
    let wx = axis_weights(img.width, width);
    let wy = axis_weights(img.height, height);
    // horizontal pass in f64, then vertical
    let mut rows = vec![0.0f64; img.height * width];
    for y in 0..img.height {
        let src = &img.pixels[y * img.width..(y + 1) * img.width];
        for (ox, taps) in wx.iter().enumerate() {
            rows[y * width + ox] = taps.iter().map(|&(s, w)| src[s] as f64 * w).sum();
        }
    }
    let mut out = Vec::with_capacity(width * height);
    for taps in &wy {
        for ox in 0..width {
            let v: f64 = taps.iter().map(|&(s, w)| rows[s * width + ox] * w).sum();
            out.push(v.round().clamp(0.0, 255.0) as u8);
        }
    }
    GrayImage::new(width, height, out)
}

/// Downscales a 135x50 CAPTCHA to the 67x25 network resolution.
pub fn resize_to_67x25(img: &GrayImage) -> Result<GrayImage> {
    if (img.width, img.height) != (SOURCE_WIDTH, SOURCE_HEIGHT) {
        return Err(Error::InvalidArgument(format!(
            "expected a {SOURCE_WIDTH}x{SOURCE_HEIGHT} image, got {}x{}",
            img.width, img.height
        )));
    }
    resize_area(img, INPUT_WIDTH, INPUT_HEIGHT)
}

/// Median of the `window x window` neighbourhood centred on every pixel, with
/// edge replication at the borders. The median is `sorted[window^2 / 2]`.
pub fn median_filter(img: &GrayImage, window: usize) -> Result<GrayImage> {
    if window < 3 || window.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "median window must be odd and >= 3, got {window}"
        )));
    }
    if window > img.width.min(img.height) {
        return Err(Error::InvalidArgument(format!(
            "median window {window} larger than image {}x{}",
            img.width, img.height
        )));
    }
    let r = (window / 2) as isize;
    let (w, h) = (img.width as isize, img.height as isize);
    let mid = window * window / 2;
    let mut buf = Vec::with_capacity(window * window);
    let mut out = Vec::with_capacity(img.pixels.len());
    for y in 0..h {
        for x in 0..w {
            buf.clear();
            for fy in -r..=r {
                let sy = (y + fy).clamp(0, h - 1) as usize;
                let row = &img.pixels[sy * img.width..(sy + 1) * img.width];
                for fx in -r..=r {
                    buf.push(row[(x + fx).clamp(0, w - 1) as usize]);
                }
            }
            let (_, m, _) = buf.select_nth_unstable(mid);
            out.push(*m);
        }
    }
    GrayImage::new(img.width, img.height, out)
}

/// Pixels scaled to `[0, 1]` as a `[1, 1, H, W]` tensor.
pub fn normalize<T: Scalar>(img: &GrayImage) -> Tensor<T> {
    let scale = T::from_f64_lossy(255.0);
    Tensor::new(
        &[1, 1, img.height, img.width],
        img.pixels.iter().map(|&p| T::from_u8(p).expect("u8 fits") / scale).collect(),
    )
    .expect("image dims are non-zero")
}

pub fn denormalize<T: Scalar>(t: &Tensor<T>) -> Result<GrayImage> {
    let [_, _, h, w] = t.dims4("denormalize")?;
    if t.len() != h * w {
        return Err(Error::InvalidArgument("denormalize expects a single-channel image".into()));
    }
    let pixels = t
        .data()
        .iter()
        .map(|&v| (v.to_f64_lossy() * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    GrayImage::new(w, h, pixels)
}

/// Preprocessing applied identically at train and inference time.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Pipeline {
    /// `None` disables the median filter.
    pub median_window: Option<usize>,
    /// Filter at full resolution before resizing instead of after.
    pub median_first: bool,
}

impl Default for Pipeline {
    fn default() -> Self {
        Self {
            median_window: Some(3),
            median_first: false,
        }
    }
}

impl Pipeline {
    /// gray 135x50 -> resize -> median -> 67x25 image.
    pub fn apply(&self, img: &GrayImage) -> Result<GrayImage> {
        match (self.median_window, self.median_first) {
            (None, _) => resize_to_67x25(img),
            (Some(w), false) => median_filter(&resize_to_67x25(img)?, w),
            (Some(w), true) => resize_to_67x25(&median_filter(img, w)?),
        }
    }

    /// Writes the normalized pixels of `img` into `dst` (length 67*25).
    pub fn apply_into<T: Scalar>(&self, img: &GrayImage, dst: &mut [T]) -> Result<()> {
        let small = self.apply(img)?;
        let scale = T::from_f64_lossy(255.0);
        if dst.len() != small.pixels.len() {
            return Err(Error::shape("preprocess", "destination length", small.pixels.len(), dst.len()));
        }
        for (d, &p) in dst.iter_mut().zip(&small.pixels) {
            *d = T::from_u8(p).expect("u8 fits") / scale;
        }
        Ok(())
    }

    pub fn tensor<T: Scalar>(&self, img: &GrayImage) -> Result<Tensor<T>> {
        Ok(normalize(&self.apply(img)?))
    }
}
