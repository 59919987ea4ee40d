//! Training artifacts: everything needed to resume scoring exactly.

use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::optimizer::AdamState;
use crate::error::{Error, Result};
use crate::memory::MemoryBank;
use crate::model::ModelParams;
use crate::tensor::ParamStore;
use crate::text::Vocabulary;

pub const CHECKPOINT_VERSION: u32 = 1;

/// A complete, reloadable training state. JSON round-trips preserve every
/// f64 bit-for-bit, so a reloaded checkpoint scores identically.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config: RunConfig,
    pub vocab: Vocabulary,
    pub model: ModelParams,
    pub store: ParamStore,
    pub optimizer: AdamState,
    /// Epoch that produced the stored parameters.
    pub epoch: usize,
    pub best_val_macro_f1: f64,
    /// Training RNG as it stood when this state was captured.
    pub rng: ChaCha8Rng,
    /// Embedding-provider fingerprint of the memory bank trained against.
    pub bank_seed: u64,
    pub bank_dim: usize,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self)?;
        std::fs::write(path, json + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let ckpt: Checkpoint = serde_json::from_str(&text)
            .map_err(|e| Error::BadCheckpoint(format!("unparseable checkpoint: {e}")))?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::BadCheckpoint(format!(
                "checkpoint version {} (this build reads {CHECKPOINT_VERSION})",
                ckpt.version
            )));
        }
        if ckpt.store.len() == 0 {
            return Err(Error::BadCheckpoint("checkpoint has no parameters".into()));
        }
        Ok(ckpt)
    }

    /// Reject a memory bank built with a different embedding space.
    pub fn check_bank(&self, bank: &MemoryBank) -> Result<()> {
        if bank.seed() != self.bank_seed || bank.dim() != self.bank_dim {
            return Err(Error::FingerprintMismatch {
                bank_seed: bank.seed(),
                bank_dim: bank.dim(),
                ckpt_seed: self.bank_seed,
                ckpt_dim: self.bank_dim,
            });
        }
        Ok(())
    }
}
