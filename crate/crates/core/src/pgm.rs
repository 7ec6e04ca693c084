//! Binary Netpbm I/O: P5 (gray) and P6 (RGB), maxval 255 only.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::{ColorImage, GrayImage};

/// Decoded Netpbm raster.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Pnm {
    Gray(GrayImage),
    Rgb(ColorImage),
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.pixels);
    out
}

pub fn write_pgm(path: impl AsRef<Path>, img: &GrayImage) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pgm(img)).map_err(|e| Error::io(path, e))
}

pub fn read_pnm(path: impl AsRef<Path>) -> Result<Pnm> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pnm(&bytes)
}

/// Reads a P5 file; P6 input is rejected (use [`read_pnm`] for color).
pub fn read_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
    match read_pnm(path)? {
        Pnm::Gray(g) => Ok(g),
        Pnm::Rgb(_) => Err(Error::format("PGM", "expected P5, found P6")),
    }
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::format("PNM", format!("missing {what}")))
    }
}

pub fn decode_pnm(bytes: &[u8]) -> Result<Pnm> {
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        _ => return Err(Error::format("PNM", "expected magic P5 or P6")),
    };
    let mut h = Header { bytes, pos: 2 };
    let width = h.number("width")?;
    let height = h.number("height")?;
    let maxval = h.number("maxval")?;
    if maxval != 255 {
        return Err(Error::format("PNM", format!("unsupported maxval {maxval}")));
    }
    // exactly one whitespace byte separates the header from the raster
    if !bytes.get(h.pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::format("PNM", "header not terminated"));
    }
    let raster = &bytes[h.pos + 1..];
    let need = width * height * channels;
    if raster.len() < need {
        return Err(Error::format(
            "PNM",
            format!("raster truncated: need {need} bytes, have {}", raster.len()),
        ));
    }
    let data = raster[..need].to_vec();
    if channels == 1 {
        Ok(Pnm::Gray(GrayImage::new(width, height, data)?))
    } else {
        Ok(Pnm::Rgb(ColorImage::new(width, height, 3, data)?))
    }
}
