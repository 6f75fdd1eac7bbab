use std::path::PathBuf;

/// Errors produced by the engine.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid sparse structure: {0}")]
    InvalidStructure(String),

    #[error("rank {rank} out of range 1..={max}")]
    RankOutOfRange { rank: usize, max: usize },

    #[error("gamma {0} out of range (0, 1]")]
    GammaOutOfRange(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("dense oracle limited to min dimension {cap}, got {got}")]
    OracleCapExceeded { cap: usize, got: usize },

    #[error("item count {items} exceeds the dense inversion cap {cap}")]
    InversionCapExceeded { items: usize, cap: usize },

    #[error("internal numerical failure: {0}")]
    Numerical(String),

    #[error("cannot inject {requested} noise pairs: only {available} absent pairs")]
    NoiseInfeasible { requested: usize, available: usize },

    #[error("index {index} out of range for {len} {what}")]
    IndexOutOfRange { index: usize, len: usize, what: &'static str },

    #[error("I/O error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: no valid interaction lines")]
    NoValidLines { path: PathBuf },

    #[error("corrupt model file: {0}")]
    CorruptModel(String),

    #[error("unsupported model format version {found} (this build reads version {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },

    #[error("report serialization: {0}")]
    Report(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
