//! Embedded antialiased glyph bitmaps (DejaVu Sans Bold, pre-rendered by
//! `tools/gen_glyph_atlas.py`).

use std::sync::OnceLock;

use crate::error::{Error, Result};

static ATLAS_BYTES: &[u8] = include_bytes!("../../assets/glyphs.bin");

/// Coverage bitmap of one glyph (0 = background, 255 = full ink).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Glyph {
    pub ch: char,
    pub width: usize,
    pub height: usize,
    pub coverage: Vec<u8>,
}

impl Glyph {
    #[inline]
    pub fn at(&self, x: usize, y: usize) -> u8 {
        self.coverage[y * self.width + x]
    }

    /// Number of pixels with any ink.
    pub fn ink(&self) -> usize {
        self.coverage.iter().filter(|&&c| c > 0).count()
    }
}

#[derive(Clone, Debug)]
pub struct Atlas {
    glyphs: Vec<Glyph>,
    cell_height: usize,
}

impl Atlas {
    pub fn embedded() -> &'static Atlas {
        static ATLAS: OnceLock<Atlas> = OnceLock::new();
        ATLAS.get_or_init(|| Atlas::parse(ATLAS_BYTES).expect("embedded glyph atlas is well-formed"))
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let bad = |d: &str| Error::format("glyph atlas", d);
        if bytes.get(..4) != Some(b"GLYF") {
            return Err(bad("bad magic"));
        }
        let [version, count, height] = bytes.get(4..7).ok_or_else(|| bad("short header"))? else {
            unreachable!()
        };
        if *version != 1 {
            return Err(bad("unsupported version"));
        }
        let height = *height as usize;
        let mut pos = 7;
        let mut glyphs = Vec::with_capacity(*count as usize);
        for _ in 0..*count {
            let [ch, width] = bytes.get(pos..pos + 2).ok_or_else(|| bad("short glyph header"))? else {
                unreachable!()
            };
            let width = *width as usize;
            pos += 2;
            let coverage = bytes
                .get(pos..pos + width * height)
                .ok_or_else(|| bad("short glyph data"))?
                .to_vec();
            pos += width * height;
            glyphs.push(Glyph {
                ch: *ch as char,
                width,
                height,
                coverage,
            });
        }
        Ok(Self {
            glyphs,
            cell_height: height,
        })
    }

    pub fn cell_height(&self) -> usize {
        self.cell_height
    }

    /// Exact-case lookup.
    pub fn glyph(&self, ch: char) -> Option<&Glyph> {
        self.glyphs.iter().find(|g| g.ch == ch)
    }

    pub fn len(&self) -> usize {
        self.glyphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.glyphs.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::captcha::charset::Charset;

    #[test]
    fn covers_every_symbol_in_both_cases() {
        let atlas = Atlas::embedded();
        assert!(atlas.cell_height() >= 24);
        for cs in [Charset::numeric(), Charset::alphanumeric()] {
            for &s in cs.symbols() {
                let g = atlas.glyph(s).unwrap_or_else(|| panic!("missing {s}"));
                assert!(g.ink() > 20, "{s} has almost no ink");
                if s.is_ascii_alphabetic() {
                    assert!(atlas.glyph(s.to_ascii_uppercase()).is_some());
                }
            }
        }
    }

    #[test]
    fn rejects_corrupt_data() {
        assert!(Atlas::parse(b"NOPE").is_err());
        assert!(Atlas::parse(&ATLAS_BYTES[..ATLAS_BYTES.len() - 1]).is_err());
    }
}
