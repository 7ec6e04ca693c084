//! The Deep-CAPTCHA network, its label codec and checkpoint format.

pub mod checkpoint;
pub mod codec;
pub mod config;
pub mod network;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint};
pub use codec::{Decoded, LabelCodec};
pub use config::{HeadMethod, ModelConfig};
pub use network::{backward, forward, init_params, predict, ForwardCache, ModelParams};

pub type ModelParams32 = ModelParams<f32>;
pub type ModelParams64 = ModelParams<f64>;
