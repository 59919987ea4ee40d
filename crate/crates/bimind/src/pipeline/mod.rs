//! End-to-end pipeline: configuration, data splitting, optimization,
//! checkpointing, training/evaluation, attention diagnostics, and
//! synthetic corpora.

mod checkpoint;
mod config;
mod diagnose;
mod optimizer;
mod split;
mod synth;
mod train;

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use config::RunConfig;
pub use diagnose::{attention_report, AttentionReport, DocAttention};
pub use optimizer::{Adam, AdamState, StepReport};
pub use split::{stratified_split, Split};
pub use synth::{SynthKind, SynthSpec};
pub use train::{
    evaluate, leakage_audit, train, EpochStats, EvalOutcome, TrainOutcome,
};
