use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Tensor shapes disagree; `what` names the offending dimension.
    #[error("{op}: shape mismatch in {what}: expected {expected}, got {actual}")]
    Shape {
        op: &'static str,
        what: String,
        expected: String,
        actual: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("symbol {symbol:?} is not in the {charset} charset")]
    UnknownSymbol { symbol: char, charset: &'static str },

    #[error("label {label:?} has length {actual}, expected {expected}")]
    LabelLength {
        label: String,
        expected: usize,
        actual: usize,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed {kind}: {detail}")]
    Format { kind: &'static str, detail: String },

    #[error("checkpoint: bad magic {0:?}")]
    BadMagic([u8; 4]),

    #[error("checkpoint: unsupported version {0}")]
    UnsupportedVersion(u16),

    #[error("checkpoint truncated: need {expected} bytes, file has {actual}")]
    Truncated { expected: usize, actual: usize },

    #[error("checkpoint payload disagrees with header: header implies {expected} bytes, file has {actual}")]
    PayloadMismatch { expected: usize, actual: usize },

    #[error("manifest {} contains no samples", .0.display())]
    EmptyManifest(PathBuf),

    /// Model and data disagree on charset, length or alphabet size.
    #[error("model/data mismatch in {what}: model has {model}, data has {data}")]
    Mismatch {
        what: &'static str,
        model: String,
        data: String,
    },

    #[error("manifest has no glyph metadata; regenerate the dataset with `deep-captcha gen` to get it")]
    MissingGlyphMeta,

    #[error("training diverged: non-finite loss in epoch {epoch}")]
    Divergence { epoch: usize },
}

impl Error {
    pub(crate) fn shape(
        op: &'static str,
        what: impl Into<String>,
        expected: impl std::fmt::Debug,
        actual: impl std::fmt::Debug,
    ) -> Self {
        Error::Shape {
            op,
            what: what.into(),
            expected: format!("{expected:?}"),
            actual: format!("{actual:?}"),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(kind: &'static str, detail: impl Into<String>) -> Self {
        Error::Format {
            kind,
            detail: detail.into(),
        }
    }
}
