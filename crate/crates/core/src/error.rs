use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("{op}: {msg}")]
    BadShape { op: &'static str, msg: String },

    #[error("conv1d: input length {len} is shorter than kernel size {kernel}")]
    InputTooShort { len: usize, kernel: usize },

    #[error("masked_mean: empty valid region")]
    EmptyValidRegion,

    #[error("nll_loss: label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("backward: loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("fft: signal length {0} is too short (need at least 2)")]
    SignalTooShort(usize),

    #[error("malformed spectrum: {0}")]
    MalformedSpectrum(String),

    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    #[error("layer {index} ({layer}) underflows: input length {len}")]
    ChainUnderflow {
        index: usize,
        layer: String,
        len: usize,
    },

    #[error("loss became non-finite at epoch {epoch}")]
    Divergence { epoch: usize },

    #[error("invalid task: {0}")]
    InvalidTask(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
