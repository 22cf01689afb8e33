use thiserror::Error;

pub type Result<T> = std::result::Result<T, SlampError>;

#[derive(Debug, Error)]
pub enum SlampError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("invalid shape {shape:?}: {reason}")]
    InvalidShape { shape: Vec<usize>, reason: String },

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("{name} out of range: {value}")]
    OutOfRange { name: &'static str, value: f64 },

    #[error("expected a binary tensor for {0}")]
    NotBinary(&'static str),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("network is empty")]
    EmptyNetwork,

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("timestep mismatch: expected {expected}, got {actual}")]
    TimestepMismatch { expected: usize, actual: usize },

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("tape is missing or stale: {0}")]
    StaleTape(&'static str),

    #[error("record does not match network: {0}")]
    RecordMismatch(String),

    #[error("enumeration over {inputs} inputs exceeds the cap of {cap}")]
    EnumerationLimit { inputs: usize, cap: usize },

    #[error("checkpoint corrupted: {0}")]
    Corrupted(String),

    #[error("unsupported checkpoint version {0}")]
    Version(u16),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}
