//! Binary checkpoint container.
//!
//! Layout (little-endian):
//!
//! | offset | size | field                                        |
//! |--------|------|----------------------------------------------|
//! | 0      | 4    | magic `DCAP`                                 |
//! | 4      | 2    | version (1)                                  |
//! | 6      | 1    | charset (0 numeric, 1 alnum, 2 none)         |
//! | 7      | 1    | L                                            |
//! | 8      | 1    | D                                            |
//! | 9      | 1    | head (0 softmax, 1 sigmoid)                  |
//! | 10     | 6    | conv widths, 3 x u16                         |
//! | 16     | 1    | kernel size                                  |
//! | 17     | 4    | dense width, u32                             |
//! | 21     | 2    | input height, u16                            |
//! | 23     | 2    | input width, u16                             |
//! | 25     | 4n   | parameters as f32, in `param_shapes` order   |
//!
//! The dropout rate is not stored; loaded configs use 0.3.

use std::path::Path;

use super::config::{HeadMethod, ModelConfig};
use super::network::ModelParams;
use crate::captcha::CharsetKind;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: [u8; 4] = *b"DCAP";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 25;
const DEFAULT_DROPOUT: f64 = 0.3;

fn narrow<U: TryFrom<usize>>(v: usize, what: &str) -> Result<U> {
    U::try_from(v).map_err(|_| Error::format("checkpoint", format!("{what} {v} does not fit the header field")))
}

pub fn encode_checkpoint(params: &ModelParams<f32>, cfg: &ModelConfig) -> Result<Vec<u8>> {
    cfg.validate()?;
    params.check(cfg)?;
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * params.count());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(match cfg.charset {
        Some(CharsetKind::Numeric) => 0,
        Some(CharsetKind::Alphanumeric) => 1,
        None => 2,
    });
    out.push(narrow::<u8>(cfg.length, "length")?);
    out.push(narrow::<u8>(cfg.classes, "classes")?);
    out.push(match cfg.head {
        HeadMethod::Softmax => 0,
        HeadMethod::Sigmoid => 1,
    });
    for &c in &cfg.conv_widths {
        out.extend_from_slice(&narrow::<u16>(c, "conv width")?.to_le_bytes());
    }
    out.push(narrow::<u8>(cfg.kernel, "kernel")?);
    out.extend_from_slice(&narrow::<u32>(cfg.dense, "dense width")?.to_le_bytes());
    out.extend_from_slice(&narrow::<u16>(cfg.input_height, "input height")?.to_le_bytes());
    out.extend_from_slice(&narrow::<u16>(cfg.input_width, "input width")?.to_le_bytes());
    for t in &params.tensors {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

fn u16_at(b: &[u8], at: usize) -> usize {
    u16::from_le_bytes([b[at], b[at + 1]]) as usize
}

/// Parses only the header. `bytes` must hold at least [`HEADER_LEN`] bytes.
pub fn decode_header(bytes: &[u8]) -> Result<ModelConfig> {
    if bytes.len() < 4 || bytes[..4] != MAGIC {
        let mut got = [0u8; 4];
        let n = bytes.len().min(4);
        got[..n].copy_from_slice(&bytes[..n]);
        return Err(Error::BadMagic(got));
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated {
            expected: HEADER_LEN,
            actual: bytes.len(),
        });
    }
    let version = u16_at(bytes, 4) as u16;
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let charset = match bytes[6] {
        0 => Some(CharsetKind::Numeric),
        1 => Some(CharsetKind::Alphanumeric),
        2 => None,
        b => return Err(Error::format("checkpoint", format!("unknown charset code {b}"))),
    };
    let head = match bytes[9] {
        0 => HeadMethod::Softmax,
        1 => HeadMethod::Sigmoid,
        b => return Err(Error::format("checkpoint", format!("unknown head code {b}"))),
    };
    let cfg = ModelConfig {
        input_height: u16_at(bytes, 21),
        input_width: u16_at(bytes, 23),
        conv_widths: [u16_at(bytes, 10), u16_at(bytes, 12), u16_at(bytes, 14)],
        kernel: bytes[16] as usize,
        dense: u32::from_le_bytes([bytes[17], bytes[18], bytes[19], bytes[20]]) as usize,
        dropout: DEFAULT_DROPOUT,
        length: bytes[7] as usize,
        classes: bytes[8] as usize,
        head,
        charset,
    };
    cfg.validate()
        .map_err(|e| Error::format("checkpoint", format!("invalid header: {e}")))?;
    Ok(cfg)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(ModelParams<f32>, ModelConfig)> {
    let cfg = decode_header(bytes)?;
    let expected = HEADER_LEN + 4 * cfg.param_count();
    if bytes.len() < expected {
        return Err(Error::Truncated {
            expected,
            actual: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(Error::PayloadMismatch {
            expected,
            actual: bytes.len(),
        });
    }
    let mut floats = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]));
    let tensors = cfg
        .param_shapes()
        .iter()
        .map(|s| {
            let n = s.iter().product();
            Tensor::new(s, floats.by_ref().take(n).collect())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((ModelParams { tensors }, cfg))
}

pub fn save_checkpoint(params: &ModelParams<f32>, cfg: &ModelConfig, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_checkpoint(params, cfg)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(ModelParams<f32>, ModelConfig)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
