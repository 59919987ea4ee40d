//! Attention diagnostics: per-document attention entropy and how much
//! mass each head places on each part-of-speech category.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::Checkpoint;
use crate::encoder::{attention_entropy, pos_attention_mass};
use crate::error::{Error, Result};
use crate::model::{forward, ForwardOptions};
use crate::tensor::Tape;
use crate::text::{prepare, Instance, D_POS};

/// Attention statistics for one document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DocAttention {
    pub id: String,
    /// Mean attention entropy, indexed `[layer][head]`.
    pub entropy: Vec<Vec<f64>>,
    /// Attention mass per part-of-speech category, `[layer][head][category]`.
    pub pos_mass: Vec<Vec<[f64; D_POS]>>,
    /// Full row-major attention matrices `[layer][head]`, when requested.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Vec<Vec<Vec<f64>>>>,
}

/// Attention statistics over a document set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttentionReport {
    pub n_documents: usize,
    /// Mean over documents of the per-document entropies, `[layer][head]`.
    pub mean_entropy: Vec<Vec<f64>>,
    pub documents: Vec<DocAttention>,
    pub seed: Option<u64>,
    pub config_digest: Option<String>,
}

/// Run the encoder over up to `limit` documents, recording attention.
/// Attention sits upstream of memory injection, so no bank is needed.
pub fn attention_report(
    ckpt: &Checkpoint,
    instances: &[Instance],
    limit: usize,
    dump_alpha: bool,
) -> Result<AttentionReport> {
    if instances.is_empty() {
        return Err(Error::EmptyMetrics);
    }
    let config = &ckpt.config;
    let opts = ForwardOptions {
        mode: config.effective_mode(),
        use_aga: !config.disable_aga,
        dropout: 0.0,
        record_attention: true,
    };
    let zero_summary = vec![0.0; config.d_s];
    let mut documents = Vec::new();
    let mut mean_entropy: Vec<Vec<f64>> = Vec::new();
    for inst in instances.iter().take(limit.max(1)) {
        let doc = prepare(inst, &ckpt.vocab, config.l_max);
        let mut tape = Tape::new();
        let out = forward::<ChaCha8Rng>(
            &mut tape,
            &ckpt.store,
            &ckpt.model,
            &doc,
            &zero_summary,
            &opts,
            None,
        )?;
        let trace = out
            .trace
            .attention
            .ok_or_else(|| Error::Config("forward pass recorded no attention".into()))?;
        let entropy = attention_entropy(&trace);
        let pos_mass = pos_attention_mass(&trace, &doc.pos);
        if mean_entropy.is_empty() {
            mean_entropy = entropy
                .iter()
                .map(|heads| vec![0.0; heads.len()])
                .collect();
        }
        for (layer, heads) in entropy.iter().enumerate() {
            for (head, &h) in heads.iter().enumerate() {
                mean_entropy[layer][head] += h;
            }
        }
        let alpha = dump_alpha.then(|| {
            trace
                .layers
                .iter()
                .map(|layer| layer.heads.iter().map(|h| h.alpha.clone()).collect())
                .collect()
        });
        documents.push(DocAttention {
            id: doc.id.clone(),
            entropy,
            pos_mass,
            alpha,
        });
    }
    let n = documents.len() as f64;
    for heads in &mut mean_entropy {
        for h in heads {
            *h /= n;
        }
    }
    Ok(AttentionReport {
        n_documents: documents.len(),
        mean_entropy,
        documents,
        seed: Some(config.seed),
        config_digest: Some(config.digest()),
    })
}
