use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the pipeline can surface.
///
/// Variants are grouped by the stage that raises them. [`Error::class`] gives
/// a stable short name that is written into the run manifest and returned by
/// the review service, so renaming a variant's class is a format change.
#[derive(Debug, Error)]
pub enum Error {
    // corpus
    #[error("corpus directory {0} contains no transcript files")]
    CorpusEmpty(PathBuf),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("documents {first} and {second} map to the same id {doc_id}")]
    DuplicateDocId {
        doc_id: String,
        first: PathBuf,
        second: PathBuf,
    },
    #[error("document {doc_id}: sentence at byte {offset} has {tokens} tokens, over the chunk limit of {limit}")]
    ChunkOverflow {
        doc_id: String,
        offset: usize,
        tokens: usize,
        limit: usize,
    },
    #[error("document {0} is empty after cleaning")]
    EmptyDocument(String),
    #[error("invalid chunk policy: {0}")]
    InvalidPolicy(String),

    // llm gateway
    #[error("prompt needs {prompt_tokens} tokens plus {response_tokens} for the response, over the context limit of {limit}")]
    TokenBudgetExceeded {
        prompt_tokens: usize,
        response_tokens: usize,
        limit: usize,
    },
    #[error("provider unavailable after {attempts} attempts: {last_error}")]
    ProviderUnavailable { attempts: u32, last_error: String },
    #[error("provider rejected the request: {0}")]
    ProviderRejected(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("mock provider has no response registered for purpose {purpose} (digest {digest})")]
    MockMiss { purpose: String, digest: String },
    #[error("a canned response is already registered for {0}")]
    DuplicateRegistration(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),

    // parsing
    #[error("could not parse model response: {reason}")]
    Parse { reason: String, raw: String },

    // coding / theming / review
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },
    #[error("codebook is empty")]
    EmptyCodebook,
    #[error("codebook must be at stage {expected}, found {found}")]
    WrongStage { expected: String, found: String },
    #[error("code {0} has no lineage in the merge map")]
    LineageGap(String),
    #[error("unknown theme {0}")]
    UnknownTheme(String),
    #[error("decision is incomplete: {0}")]
    IncompleteDecision(String),
    #[error("invalid decision: {0}")]
    InvalidDecision(String),

    // personas
    #[error("theme book is empty")]
    EmptyThemeBook,
    #[error("no pairs can be formed under mode {0}")]
    EmptyPairSet(String),

    // store
    #[error("schema error ({context}): {detail}")]
    Schema { context: String, detail: String },
    #[error("manifest corruption: {0}")]
    ManifestCorruption(String),
    #[error("unknown artifact {0}")]
    UnknownArtifact(String),
    #[error("unknown run {0}")]
    UnknownRun(String),

    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(reason: impl Into<String>, raw: impl Into<String>) -> Self {
        Error::Parse {
            reason: reason.into(),
            raw: raw.into(),
        }
    }

    pub fn in_stage(self, stage: impl Into<String>) -> Self {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage: stage.into(),
                source: Box::new(e),
            },
        }
    }

    pub fn schema(context: impl Into<String>, detail: impl ToString) -> Self {
        Error::Schema {
            context: context.into(),
            detail: detail.to_string(),
        }
    }

    /// Stable error class recorded in manifests and service responses.
    pub fn class(&self) -> &'static str {
        match self {
            Error::CorpusEmpty(_) => "CorpusEmpty",
            Error::Io { .. } => "IoError",
            Error::DuplicateDocId { .. } => "DuplicateDocId",
            Error::ChunkOverflow { .. } => "ChunkOverflow",
            Error::EmptyDocument(_) => "EmptyDocument",
            Error::InvalidPolicy(_) => "InvalidPolicy",
            Error::TokenBudgetExceeded { .. } => "TokenBudgetExceeded",
            Error::ProviderUnavailable { .. } => "ProviderUnavailable",
            Error::ProviderRejected(_) => "ProviderRejected",
            Error::Config(_) => "ConfigError",
            Error::MockMiss { .. } => "MockMiss",
            Error::DuplicateRegistration(_) => "DuplicateRegistration",
            Error::InvalidRequest(_) => "InvalidRequest",
            Error::Parse { .. } => "ParseError",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::EmptyCodebook => "EmptyCodebook",
            Error::WrongStage { .. } => "WrongStage",
            Error::LineageGap(_) => "LineageGap",
            Error::UnknownTheme(_) => "UnknownTheme",
            Error::IncompleteDecision(_) => "IncompleteDecision",
            Error::InvalidDecision(_) => "InvalidDecision",
            Error::EmptyThemeBook => "EmptyThemeBook",
            Error::EmptyPairSet(_) => "EmptyPairSet",
            Error::Schema { .. } => "SchemaError",
            Error::ManifestCorruption(_) => "ManifestCorruption",
            Error::UnknownArtifact(_) => "UnknownArtifact",
            Error::UnknownRun(_) => "UnknownRun",
            Error::Stage { source, .. } => source.class(),
        }
    }

    /// The raw model output attached to a parse failure, if any.
    pub fn raw_response(&self) -> Option<&str> {
        match self {
            Error::Parse { raw, .. } => Some(raw),
            Error::Stage { source, .. } => source.raw_response(),
            _ => None,
        }
    }
}
