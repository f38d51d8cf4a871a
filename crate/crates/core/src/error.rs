use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An enumeration or construction would exceed a configured size cap.
    #[error("{what}: size {size} exceeds cap {cap}{}", hint.map(|h| format!(" ({h})")).unwrap_or_default())]
    Size {
        what: &'static str,
        size: u128,
        cap: u128,
        hint: Option<&'static str>,
    },

    #[error("{what} {value} out of range (allowed {allowed})")]
    OutOfRange {
        what: &'static str,
        value: String,
        allowed: String,
    },

    #[error("invalid argument: {0}")]
    Argument(String),

    /// Structural validation failure; `path` points at the offending node or entry.
    #[error("invalid {what} at {path}: {message}")]
    Validation {
        what: &'static str,
        path: String,
        message: String,
    },

    #[error("objects are defined over different filtration trees")]
    TreeMismatch,

    #[error("unsupported schema {found:?}, expected {expected:?}")]
    Schema { expected: &'static str, found: String },

    /// Malformed or mistyped JSON; `path` is the JSON node path (`.` is the root).
    #[error("malformed JSON at {path}: {message}")]
    Parse { path: String, message: String },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn out_of_range(
        what: &'static str,
        value: impl ToString,
        allowed: impl ToString,
    ) -> Self {
        Error::OutOfRange {
            what,
            value: value.to_string(),
            allowed: allowed.to_string(),
        }
    }

    pub(crate) fn validation(
        what: &'static str,
        path: impl Into<String>,
        message: impl Into<String>,
    ) -> Self {
        Error::Validation {
            what,
            path: path.into(),
            message: message.into(),
        }
    }
}

/// Deserializes `s`, reporting failures with the path of the offending node.
pub fn parse_json<T: serde::de::DeserializeOwned>(s: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(s);
    serde_path_to_error::deserialize(de).map_err(|e| Error::Parse {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })
}
