use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CharsetKind {
    Numeric,
    #[serde(rename = "alnum")]
    Alphanumeric,
}

impl CharsetKind {
    pub fn name(self) -> &'static str {
        match self {
            CharsetKind::Numeric => "numeric",
            CharsetKind::Alphanumeric => "alnum",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "numeric" => Ok(CharsetKind::Numeric),
            "alnum" | "alphanumeric" => Ok(CharsetKind::Alphanumeric),
            _ => Err(Error::InvalidArgument(format!(
                "unknown charset {s:?} (expected numeric or alnum)"
            ))),
        }
    }
}

/// Ordered label alphabet.
///
/// Numeric is the ten digits. Alphanumeric drops the easily confused
/// `0 1 i l o` and keeps 31 symbols; letters are case-folded to lowercase in
/// labels even though they may be rendered in either case.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Charset {
    kind: CharsetKind,
    symbols: Vec<char>,
}

impl Charset {
    pub fn new(kind: CharsetKind) -> Self {
        let symbols: Vec<char> = match kind {
            CharsetKind::Numeric => ('0'..='9').collect(),
            CharsetKind::Alphanumeric => ('2'..='9')
                .chain(('a'..='z').filter(|c| !matches!(c, 'i' | 'l' | 'o')))
                .collect(),
        };
        let expected = match kind {
            CharsetKind::Numeric => 10,
            CharsetKind::Alphanumeric => 31,
        };
        assert_eq!(symbols.len(), expected, "charset cardinality");
        Self { kind, symbols }
    }

    pub fn numeric() -> Self {
        Self::new(CharsetKind::Numeric)
    }

    pub fn alphanumeric() -> Self {
        Self::new(CharsetKind::Alphanumeric)
    }

    pub fn kind(&self) -> CharsetKind {
        self.kind
    }

    pub fn symbols(&self) -> &[char] {
        &self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbol(&self, index: usize) -> char {
        self.symbols[index]
    }

    /// Index of `c`, case-insensitive for letters.
    pub fn index_of(&self, c: char) -> Option<usize> {
        let c = c.to_ascii_lowercase();
        self.symbols.iter().position(|&s| s == c)
    }

    /// Maps a label to symbol indices.
    pub fn indices(&self, label: &str) -> Result<Vec<usize>> {
        label
            .chars()
            .map(|c| {
                self.index_of(c).ok_or(Error::UnknownSymbol {
                    symbol: c,
                    charset: self.kind.name(),
                })
            })
            .collect()
    }

    pub fn label(&self, indices: &[usize]) -> String {
        indices.iter().map(|&i| self.symbols[i]).collect()
    }
}
