//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("shape {shape:?} does not match data length {len}")]
    BadShape { shape: Vec<usize>, len: usize },

    #[error("softmax row {row} is fully masked")]
    DegenerateRow { row: usize },

    #[error("masked reduction over a fully masked sequence")]
    AllMasked,

    #[error("non-finite values produced by {op}")]
    NonFinite { op: &'static str },

    #[error("token id {id} out of range for vocabulary of size {vocab}")]
    TokenIdOutOfRange { id: usize, vocab: usize },

    #[error("gradient check aborted: {reason}")]
    GradCheckAborted { reason: String },

    #[error("label {got} outside the binary label set {{0, 1}}")]
    BadLabel { got: i64 },

    #[error("probability vector entry {value} is negative")]
    NegativeProbability { value: f64 },

    #[error("duplicate instance id {0:?}")]
    DuplicateId(String),

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("metrics requested over an empty prediction set")]
    EmptyMetrics,

    #[error("split {which:?} received 0 instances")]
    EmptySplit { which: &'static str },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown fusion mode {0:?}")]
    UnknownFusionMode(String),

    #[error(
        "memory bank fingerprint (seed={bank_seed}, d_s={bank_dim}) does not match \
         checkpoint (seed={ckpt_seed}, d_s={ckpt_dim})"
    )]
    FingerprintMismatch {
        bank_seed: u64,
        bank_dim: usize,
        ckpt_seed: u64,
        ckpt_dim: usize,
    },

    #[error("malformed memory bank file: {0}")]
    BadBankFile(String),

    #[error("malformed checkpoint: {0}")]
    BadCheckpoint(String),

    #[error("training diverged at epoch {epoch}: loss became non-finite")]
    Diverged { epoch: usize },

    #[error("dataset line {line}: {msg}")]
    BadRecord { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
