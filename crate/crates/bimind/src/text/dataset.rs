//! Dataset records and per-document preparation.
//!
//! The on-disk format is one JSON object per line with fields `id`, `text`,
//! and `label` (1 = correct content, 0 = incorrect). Preparation turns a
//! record into the model-facing document: ids, POS attributes, mask, and
//! content features.

use std::collections::HashSet;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::features::content_features;
use crate::text::pos::{pos_tag, PosCategory};
use crate::text::tokenizer::tokenize;
use crate::text::vocab::Vocabulary;

/// One labeled document as stored on disk.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Instance {
    pub id: String,
    pub text: String,
    pub label: u8,
}

/// Load a JSONL dataset, validating labels and id uniqueness.
pub fn load_jsonl(path: &Path) -> Result<Vec<Instance>> {
    let file = std::fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let inst: Instance = serde_json::from_str(&line).map_err(|e| Error::BadRecord {
            line: idx + 1,
            msg: e.to_string(),
        })?;
        if inst.label > 1 {
            return Err(Error::BadLabel {
                got: i64::from(inst.label),
            });
        }
        if !seen.insert(inst.id.clone()) {
            return Err(Error::DuplicateId(inst.id));
        }
        out.push(inst);
    }
    if out.is_empty() {
        return Err(Error::EmptyDataset(path.display().to_string()));
    }
    Ok(out)
}

/// A document after tokenization, id mapping, truncation, and feature
/// extraction — everything the encoder and memory need.
#[derive(Debug, Clone)]
pub struct TokenizedDoc {
    pub id: String,
    /// Raw text, kept for the memory provider (which embeds full text).
    pub text: String,
    /// Vocabulary ids, truncated to the window length.
    pub token_ids: Vec<usize>,
    /// Coarse POS category per kept token.
    pub pos: Vec<PosCategory>,
    /// True for every real (non-padding) position. Documents are processed
    /// unpadded, so this is all-true with the same length as `token_ids`;
    /// it exists so downstream code never assumes that.
    pub mask: Vec<bool>,
    /// Content features over the full, untruncated token sequence.
    pub features: Vec<f64>,
    /// 1 = correct content, 0 = incorrect.
    pub label: usize,
}

/// Tokenize, map to vocabulary ids, truncate to `l_max`, and extract
/// content features for one instance.
pub fn prepare(inst: &Instance, vocab: &Vocabulary, l_max: usize) -> TokenizedDoc {
    let tokens = tokenize(&inst.text);
    let all_ids: Vec<usize> = tokens.iter().map(|t| vocab.id(t)).collect();
    let features = content_features(&inst.text, &tokens, &all_ids, l_max);

    let keep = tokens.len().min(l_max.max(1));
    let token_ids = all_ids[..keep].to_vec();
    let pos = tokens[..keep].iter().map(|t| pos_tag(t)).collect();
    let mask = vec![true; keep];

    TokenizedDoc {
        id: inst.id.clone(),
        text: inst.text.clone(),
        token_ids,
        pos,
        mask,
        features,
        label: inst.label as usize,
    }
}
