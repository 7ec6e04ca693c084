//! Preprocessed, in-memory datasets.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::captcha::{read_manifest, Charset, CharsetKind, GlyphMeta, ManifestEntry};
use crate::error::{Error, Result};
use crate::pgm::read_pgm;
use crate::preprocess::{Pipeline, INPUT_HEIGHT, INPUT_WIDTH};
use crate::tensor::Tensor;

/// Network-ready samples: normalized pixels plus symbol indices.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub dir: PathBuf,
    pub charset: Charset,
    pub length: usize,
    pub height: usize,
    pub width: usize,
    /// `len * height * width` pixels in `[0, 1]`.
    pub pixels: Vec<f32>,
    /// `len * length` symbol indices.
    pub targets: Vec<usize>,
    pub entries: Vec<ManifestEntry>,
}

/// Guesses the charset from label content: digits `0`/`1` or letters force
/// a choice, anything else defaults to numeric.
pub fn infer_charset(entries: &[ManifestEntry]) -> CharsetKind {
    let has_letters = entries.iter().any(|e| e.label.chars().any(|c| c.is_ascii_alphabetic()));
    if has_letters {
        CharsetKind::Alphanumeric
    } else {
        CharsetKind::Numeric
    }
}

impl Dataset {
    /// Loads every image listed in the manifest at `path` (file or
    /// directory) and runs the preprocessing pipeline on it. When `charset`
    /// is `None` it is read from the stored generator config, or inferred
    /// from the labels.
    pub fn load(path: impl AsRef<Path>, charset: Option<CharsetKind>, pipeline: &Pipeline) -> Result<Self> {
        let (dir, entries) = read_manifest(path)?;
        let kind = match charset {
            Some(k) => k,
            None => match crate::captcha::read_dataset_config(&dir)? {
                Some(cfg) => cfg.charset,
                None => infer_charset(&entries),
            },
        };
        let images = entries
            .par_iter()
            .map(|e| {
                let p = dir.join(&e.filename);
                let img = read_pgm(&p)?;
                let mut px = vec![0f32; INPUT_HEIGHT * INPUT_WIDTH];
                pipeline
                    .apply_into(&img, &mut px)
                    .map_err(|err| Error::InvalidArgument(format!("{}: {err}", p.display())))?;
                Ok(px)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_parts(dir, Charset::new(kind), entries, images.concat(), INPUT_HEIGHT, INPUT_WIDTH)
    }

    /// Builds a dataset from already preprocessed pixels.
    pub fn from_parts(
        dir: PathBuf,
        charset: Charset,
        entries: Vec<ManifestEntry>,
        pixels: Vec<f32>,
        height: usize,
        width: usize,
    ) -> Result<Self> {
        let first = entries.first().ok_or_else(|| Error::EmptyManifest(dir.clone()))?;
        let length = first.label.chars().count();
        let mut targets = Vec::with_capacity(entries.len() * length);
        for e in &entries {
            let n = e.label.chars().count();
            if n != length {
                return Err(Error::LabelLength {
                    label: e.label.clone(),
                    expected: length,
                    actual: n,
                });
            }
            targets.extend(charset.indices(&e.label)?);
        }
        if pixels.len() != entries.len() * height * width {
            return Err(Error::shape("dataset", "pixel count", entries.len() * height * width, pixels.len()));
        }
        Ok(Self {
            dir,
            charset,
            length,
            height,
            width,
            pixels,
            targets,
            entries,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.charset.len()
    }

    /// Stacks the samples at `indices` into an `[n, 1, H, W]` tensor.
    pub fn batch(&self, indices: &[usize]) -> Tensor<f32> {
        let hw = self.height * self.width;
        let mut data = Vec::with_capacity(indices.len() * hw);
        for &i in indices {
            data.extend_from_slice(&self.pixels[i * hw..(i + 1) * hw]);
        }
        Tensor::new(&[indices.len(), 1, self.height, self.width], data).expect("batch shape")
    }

    /// `[n, L*D]` 0/1 targets for `indices`.
    pub fn batch_targets(&self, indices: &[usize]) -> Tensor<f32> {
        let (l, d) = (self.length, self.classes());
        let mut data = vec![0f32; indices.len() * l * d];
        for (row, &i) in indices.iter().enumerate() {
            for (p, &s) in self.sample_targets(i).iter().enumerate() {
                data[row * l * d + p * d + s] = 1.0;
            }
        }
        Tensor::new(&[indices.len(), l * d], data).expect("target shape")
    }

    pub fn sample_targets(&self, i: usize) -> &[usize] {
        &self.targets[i * self.length..(i + 1) * self.length]
    }

    /// Per-sample glyph metadata, if every entry carries it.
    pub fn glyphs(&self) -> Option<Vec<&[GlyphMeta]>> {
        self.entries.iter().map(|e| e.glyphs.as_deref()).collect()
    }

    /// The first `n` samples.
    pub fn take(&self, n: usize) -> Self {
        let n = n.min(self.len());
        let hw = self.height * self.width;
        Self {
            pixels: self.pixels[..n * hw].to_vec(),
            targets: self.targets[..n * self.length].to_vec(),
            entries: self.entries[..n].to_vec(),
            ..self.clone_meta()
        }
    }

    fn clone_meta(&self) -> Self {
        Self {
            dir: self.dir.clone(),
            charset: self.charset.clone(),
            length: self.length,
            height: self.height,
            width: self.width,
            pixels: Vec::new(),
            targets: Vec::new(),
            entries: Vec::new(),
        }
    }
}
