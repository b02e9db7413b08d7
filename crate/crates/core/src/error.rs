use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("position {position} out of range for label sequence of length {len}")]
    PositionOutOfRange { position: usize, len: usize },

    #[error("unknown relation name {0:?}")]
    UnknownRelation(String),

    #[error("relation id {0} is not in the catalog")]
    RelationNotInCatalog(u32),

    #[error("duplicate relation name {0:?}")]
    DuplicateRelation(String),

    #[error("relation name {0:?} yields an empty description")]
    EmptyDescription(String),

    #[error("label layout mismatch: expected {expected}, found {found}")]
    LayoutMismatch { expected: String, found: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("cannot embed an empty token list")]
    EmptyTokens,

    #[error("support columns {row} and {col} belong to different support instances")]
    CrossInstance { row: usize, col: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("infeasible episode: {0}")]
    Infeasible(String),

    #[error("episode sampling gave up after {0} attempts")]
    AttemptsExceeded(usize),

    #[error("invalid instance {id}: {}", violations.join("; "))]
    InvalidInstance { id: u64, violations: Vec<String> },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("configuration: {0}")]
    Config(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Cache(#[from] CacheError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Failures specific to the binary embedding cache.
#[derive(Debug, Error)]
pub enum CacheError {
    #[error("bad magic bytes {0:?}")]
    BadMagic([u8; 4]),

    #[error("unsupported cache version {0}")]
    BadVersion(u32),

    #[error("corrupt record at byte {offset}: {reason}")]
    Corrupt { offset: u64, reason: String },

    #[error("checksum mismatch for instance {instance_id}, relation {relation_id}")]
    Checksum { instance_id: u64, relation_id: u32 },

    #[error("no record for instance {instance_id}, relation {relation_id}")]
    MissingKey { instance_id: u64, relation_id: u32 },

    #[error("cache dimension {found} does not match expected {expected}")]
    DimMismatch { expected: usize, found: usize },
}
