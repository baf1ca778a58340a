use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = ScrubError> = std::result::Result<T, E>;

/// Every failure the toolkit can report. Each variant maps to a stable
/// upper-case code via [`ScrubError::code`], which is what the CLI prints.
#[derive(Debug, Error)]
pub enum ScrubError {
    #[error("malformed bundle {path}: {detail}")]
    MalformedBundle { path: PathBuf, detail: String },
    #[error("repository has no refs")]
    EmptyRepository,
    #[error("source tree {0} contains no files")]
    EmptyTree(PathBuf),
    #[error("remote {0} advertised no refs (empty repository or no access)")]
    NoRefs(String),
    #[error("remote {url} unreachable: {detail}")]
    Network { url: String, detail: String },
    #[error("rewrite callback failed: {0}")]
    CallbackFailure(String),
    #[error("invalid repository model: {0}")]
    InvalidModel(String),
    #[error("no lexer for language {0:?}")]
    UnsupportedLanguage(String),
    #[error("invalid rules file {path}: {detail}")]
    RulesFileInvalid { path: String, detail: String },
    #[error("dictionary {0} has no terms")]
    EmptyDictionary(String),
    #[error("NER service unavailable: {0}")]
    NerUnavailable(String),
    #[error("salt must not be empty")]
    EmptySalt,
    #[error("category {0} has no mask template")]
    UnmaskableCategory(String),
    #[error("span {start}..{end} is not valid for text of length {len}")]
    SpanOutOfRange { start: usize, end: usize, len: usize },
    #[error("post-scan found {count} residual finding(s) after replacement")]
    PostScanResidual { count: usize },
    #[error("no input values")]
    EmptyInput,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("version-control backend failed: {0}")]
    Backend(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },
}

impl ScrubError {
    pub fn code(&self) -> &'static str {
        match self {
            ScrubError::MalformedBundle { .. } => "MALFORMED_BUNDLE",
            ScrubError::EmptyRepository => "EMPTY_REPOSITORY",
            ScrubError::EmptyTree(_) => "EMPTY_TREE",
            ScrubError::NoRefs(_) => "NO_REFS",
            ScrubError::Network { .. } => "NETWORK",
            ScrubError::CallbackFailure(_) => "CALLBACK_FAILURE",
            ScrubError::InvalidModel(_) => "INVALID_MODEL",
            ScrubError::UnsupportedLanguage(_) => "UNSUPPORTED_LANGUAGE",
            ScrubError::RulesFileInvalid { .. } => "RULES_FILE_INVALID",
            ScrubError::EmptyDictionary(_) => "EMPTY_DICTIONARY",
            ScrubError::NerUnavailable(_) => "NER_UNAVAILABLE",
            ScrubError::EmptySalt => "EMPTY_SALT",
            ScrubError::UnmaskableCategory(_) => "UNMASKABLE_CATEGORY",
            ScrubError::SpanOutOfRange { .. } => "SPAN_OUT_OF_RANGE",
            ScrubError::PostScanResidual { .. } => "POST_SCAN_RESIDUAL",
            ScrubError::EmptyInput => "EMPTY_INPUT",
            ScrubError::Config(_) => "CONFIG",
            ScrubError::Backend(_) => "BACKEND",
            ScrubError::Io { .. } => "IO",
        }
    }

    /// True for failures caused by the host environment rather than the input.
    pub fn is_environment(&self) -> bool {
        matches!(
            self,
            ScrubError::Backend(_) | ScrubError::NerUnavailable(_) | ScrubError::Network { .. }
        )
    }

    pub(crate) fn io(context: impl Into<String>, source: io::Error) -> Self {
        ScrubError::Io {
            context: context.into(),
            source,
        }
    }
}
