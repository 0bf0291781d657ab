use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid {field}: {reason}")]
    InvalidSpec { field: &'static str, reason: String },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed manifest: {0}")]
    Manifest(String),

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("utterance {utterance}: expected {expected} frame labels, found {found}")]
    LabelMismatch {
        utterance: String,
        expected: usize,
        found: usize,
    },

    #[error("unsupported audio format: {0}")]
    UnsupportedAudio(String),

    #[error("waveform has {samples} samples, shorter than one {window}-sample window")]
    WaveformTooShort { samples: usize, window: usize },

    #[error(
        "utterance {utterance} has {frames} frames but a batch holds at most {capacity}; \
         chunk long utterances before batching"
    )]
    UtteranceTooLong {
        utterance: String,
        frames: usize,
        capacity: usize,
    },

    #[error("{context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("row {row} has norm {norm:e}, too small to normalize")]
    DegenerateRow { row: usize, norm: f64 },

    #[error("row {row} is not unit norm (norm {norm})")]
    NotNormalized { row: usize, norm: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("sinkhorn did not converge after {iterations} iterations (marginal violation {violation:e})")]
    NonConvergence { iterations: usize, violation: f64 },

    #[error("non-finite gradient in {0}")]
    NonFiniteGradient(String),

    #[error("step {step} outside schedule range [0, {total}]")]
    StepOutOfRange { step: usize, total: usize },

    #[error("id {id} outside [0, {bound})")]
    IdOutOfRange { id: usize, bound: usize },

    #[error("{0}")]
    Undefined(&'static str),

    #[error("features are not traceable to a synthetic manifest: {0}")]
    NotSynthetic(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(
        "loss became NaN at step {step} (lr {lr:e}, code entropy {entropy:.4}, utilization {utilization:.4})"
    )]
    NanLoss {
        step: usize,
        lr: f64,
        entropy: f64,
        utilization: f64,
    },

    #[error("empty ABX task")]
    EmptyTask,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn spec(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidSpec {
            field,
            reason: reason.into(),
        }
    }
}
