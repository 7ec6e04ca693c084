//! Dataset generation and the `manifest.tsv` index.
//!
//! Manifest lines are `filename TAB label TAB glyph-metadata-json TAB seed`.
//! Images are binary PGM files named `<index:08>.pgm` next to the manifest.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::charset::Charset;
use super::config::GenConfig;
use super::render::{render_sample, GlyphMeta};
use crate::error::{Error, Result};
use crate::pgm::encode_pgm;
use crate::rng::{derive_seed, SplitMix64};

pub const MANIFEST_NAME: &str = "manifest.tsv";
pub const CONFIG_NAME: &str = "gen_config.txt";

/// Salt separating the label stream from the rendering stream of a sample.
const LABEL_STREAM: u64 = 0x6c61_6265_6c73;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LabelMode {
    /// Labels drawn uniformly at random.
    Uniform,
    /// `k` images of every label in `charset^L`, in lexicographic order.
    Balanced { k: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    pub filename: String,
    pub label: String,
    pub glyphs: Option<Vec<GlyphMeta>>,
    pub seed: u64,
}

impl ManifestEntry {
    pub fn to_line(&self) -> String {
        let meta = match &self.glyphs {
            Some(g) => serde_json::to_string(g).expect("glyph metadata serializes"),
            None => String::new(),
        };
        format!("{}\t{}\t{}\t{}", self.filename, self.label, meta, self.seed)
    }

    /// Accepts full four-field lines and bare `filename TAB label` lines.
    pub fn parse_line(line: &str) -> Result<Self> {
        let fields: Vec<&str> = line.split('\t').collect();
        let bad = |d: String| Error::format("manifest", d);
        match fields[..] {
            [filename, label] => Ok(Self {
                filename: filename.to_string(),
                label: label.to_string(),
                glyphs: None,
                seed: 0,
            }),
            [filename, label, meta, seed] => {
                let glyphs = if meta.trim().is_empty() {
                    None
                } else {
                    Some(
                        serde_json::from_str(meta)
                            .map_err(|e| bad(format!("glyph metadata for {filename}: {e}")))?,
                    )
                };
                let seed = seed
                    .trim()
                    .parse()
                    .map_err(|_| bad(format!("bad seed {seed:?} for {filename}")))?;
                Ok(Self {
                    filename: filename.to_string(),
                    label: label.to_string(),
                    glyphs,
                    seed,
                })
            }
            _ => Err(bad(format!("expected 2 or 4 tab-separated fields, got {}", fields.len()))),
        }
    }
}

/// Summary of a generated dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub dir: PathBuf,
    pub entries: Vec<ManifestEntry>,
    /// SHA-256 over the manifest bytes followed by every image in index order.
    pub digest: String,
}

impl DatasetManifest {
    pub fn manifest_path(&self) -> PathBuf {
        self.dir.join(MANIFEST_NAME)
    }
}

/// Label for sample `index` of a dataset.
pub fn label_for_index(
    mode: LabelMode,
    charset: &Charset,
    length: usize,
    index: usize,
    sample_seed: u64,
) -> String {
    let d = charset.len();
    let mut digits = vec![0usize; length];
    match mode {
        LabelMode::Uniform => {
            let mut rng = SplitMix64::new(sample_seed ^ LABEL_STREAM);
            for slot in digits.iter_mut() {
                *slot = rng.below(d as u64) as usize;
            }
        }
        LabelMode::Balanced { k } => {
            let mut code = index / k;
            for slot in digits.iter_mut().rev() {
                *slot = code % d;
                code /= d;
            }
        }
    }
    charset.label(&digits)
}

/// Number of distinct labels of the configured charset and length.
pub fn label_space(charset: &Charset, length: usize) -> Option<usize> {
    charset.len().checked_pow(length as u32)
}

pub fn generate_dataset(
    count: usize,
    cfg: &GenConfig,
    mode: LabelMode,
    master_seed: u64,
    out_dir: impl AsRef<Path>,
) -> Result<DatasetManifest> {
    cfg.validate()?;
    if count == 0 {
        return Err(Error::InvalidArgument("count must be >= 1".into()));
    }
    let charset = Charset::new(cfg.charset);
    if let LabelMode::Balanced { k } = mode {
        let space = label_space(&charset, cfg.length);
        let required = space.and_then(|s| s.checked_mul(k));
        if k == 0 || required != Some(count) {
            return Err(Error::InvalidArgument(format!(
                "balanced mode needs count = k * {}^{} = {}; got count {count} with k {k}",
                charset.len(),
                cfg.length,
                required.map_or("overflow".to_string(), |r| r.to_string()),
            )));
        }
    }

    let dir = out_dir.as_ref().to_path_buf();
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;

    let rendered: Vec<(ManifestEntry, Vec<u8>)> = (0..count)
        .into_par_iter()
        .map(|index| {
            let seed = derive_seed(master_seed, index as u64);
            let label = label_for_index(mode, &charset, cfg.length, index, seed);
            let sample = render_sample(&label, cfg, seed)?;
            let filename = format!("{index:08}.pgm");
            let bytes = encode_pgm(&sample.image);
            let path = dir.join(&filename);
            fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
            Ok((
                ManifestEntry {
                    filename,
                    label: sample.label,
                    glyphs: Some(sample.glyphs),
                    seed,
                },
                bytes,
            ))
        })
        .collect::<Result<_>>()?;

    let mut manifest = String::new();
    for (entry, _) in &rendered {
        manifest.push_str(&entry.to_line());
        manifest.push('\n');
    }
    let manifest_path = dir.join(MANIFEST_NAME);
    fs::write(&manifest_path, &manifest).map_err(|e| Error::io(&manifest_path, e))?;
    let config_path = dir.join(CONFIG_NAME);
    fs::write(&config_path, cfg.to_text()).map_err(|e| Error::io(&config_path, e))?;

    let mut hasher = Sha256::new();
    hasher.update(manifest.as_bytes());
    for (_, bytes) in &rendered {
        hasher.update(bytes);
    }
    Ok(DatasetManifest {
        dir,
        entries: rendered.into_iter().map(|(e, _)| e).collect(),
        digest: hex(&hasher.finalize()),
    })
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::with_capacity(bytes.len() * 2), |mut s, b| {
        use std::fmt::Write as _;
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Reads a manifest; `path` may be the file itself or its directory.
/// Returns the directory images are relative to, and the entries.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<(PathBuf, Vec<ManifestEntry>)> {
    let path = path.as_ref();
    let file = if path.is_dir() {
        path.join(MANIFEST_NAME)
    } else {
        path.to_path_buf()
    };
    let dir = file.parent().map(Path::to_path_buf).unwrap_or_default();
    let text = fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
    let entries = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(ManifestEntry::parse_line)
        .collect::<Result<Vec<_>>>()?;
    if entries.is_empty() {
        return Err(Error::EmptyManifest(file));
    }
    Ok((dir, entries))
}

/// Generator settings stored next to a dataset, if any.
pub fn read_dataset_config(dir: impl AsRef<Path>) -> Result<Option<GenConfig>> {
    let path = dir.as_ref().join(CONFIG_NAME);
    if !path.exists() {
        return Ok(None);
    }
    GenConfig::load(path).map(Some)
}

pub fn write_manifest(path: impl AsRef<Path>, entries: &[ManifestEntry]) -> Result<()> {
    let path = path.as_ref();
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for e in entries {
        writeln!(f, "{}", e.to_line()).map_err(|err| Error::io(path, err))?;
    }
    Ok(())
}
