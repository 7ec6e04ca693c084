//! Synthetic CAPTCHA generation.

pub mod atlas;
pub mod charset;
pub mod config;
pub mod dataset;
pub mod render;

pub use charset::{Charset, CharsetKind};
pub use config::{GenConfig, IMAGE_HEIGHT, IMAGE_WIDTH};
pub use dataset::{generate_dataset, read_dataset_config, read_manifest, DatasetManifest, LabelMode, ManifestEntry};
pub use render::{render_sample, CaptchaSample, GlyphMeta, RenderedCase};
