use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Syntax or schema error while decoding a file. `line`/`column` are 1-based.
    #[error("{}:{line}:{column}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    /// A value parsed fine but violates a domain invariant.
    #[error("{context}: field `{field}`: {message}")]
    Invalid {
        context: String,
        field: String,
        message: String,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("layer `{layer}` is infeasible: {constraint}")]
    Infeasible { layer: String, constraint: String },

    #[error("illegal mapping: {0}")]
    IllegalMapping(String),

    #[error("arithmetic overflow while computing {0}")]
    Overflow(String),
}

impl Error {
    pub(crate) fn invalid(
        context: impl Into<String>,
        field: impl Into<String>,
        message: impl Into<String>,
    ) -> Self {
        Error::Invalid {
            context: context.into(),
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for I/O and decode failures, false for model-level failures.
    pub fn is_input_error(&self) -> bool {
        matches!(self, Error::Io { .. } | Error::Parse { .. })
    }
}

/// Converts a byte offset into a 1-based (line, column) pair.
pub(crate) fn line_col(src: &str, offset: usize) -> (usize, usize) {
    let offset = offset.min(src.len());
    let before = &src[..offset];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(offset, |nl| offset - nl - 1) + 1;
    (line, column)
}

/// Finds the line of the first `key = ...` assignment in a TOML source, if any.
pub(crate) fn toml_key_line(src: &str, key: &str) -> Option<usize> {
    src.lines().position(|l| {
        let t = l.trim_start();
        t.strip_prefix(key)
            .map(|rest| rest.trim_start().starts_with('='))
            .unwrap_or(false)
    })
    .map(|i| i + 1)
}

pub(crate) fn read_to_string(path: &std::path::Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn json_error(path: &std::path::Path, e: serde_json::Error) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

pub(crate) fn toml_error(path: &std::path::Path, src: &str, e: toml::de::Error) -> Error {
    let (line, column) = e
        .span()
        .map(|s| line_col(src, s.start))
        .unwrap_or((0, 0));
    Error::Parse {
        path: path.to_path_buf(),
        line,
        column,
        message: e.message().to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_col_counts_from_one() {
        let src = "a = 1\nbb = 2\n";
        assert_eq!(line_col(src, 0), (1, 1));
        assert_eq!(line_col(src, 6), (2, 1));
        assert_eq!(line_col(src, 8), (2, 3));
    }

    #[test]
    fn finds_key_line() {
        let src = "# c\nR = 4\n  V=0.0\n";
        assert_eq!(toml_key_line(src, "V"), Some(3));
        assert_eq!(toml_key_line(src, "R"), Some(2));
        assert_eq!(toml_key_line(src, "C"), None);
    }
}
