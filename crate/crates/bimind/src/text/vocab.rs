//! Token vocabulary with reserved PAD/UNK slots.
//!
//! Built once from the training split; evaluation-time tokens that were
//! never seen (or fell below the frequency threshold) map to UNK.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;

const PAD_TOKEN: &str = "<pad>";
const UNK_TOKEN: &str = "<unk>";

/// Immutable token↔id mapping. Ids are contiguous from 0 with PAD at 0 and
/// UNK at 1; remaining tokens are ordered by descending training-split
/// frequency, ties broken alphabetically, so builds are deterministic.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(from = "VocabularyData", into = "VocabularyData")]
pub struct Vocabulary {
    id_to_token: Vec<String>,
    min_frequency: usize,
    #[serde(skip)]
    token_to_id: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabularyData {
    id_to_token: Vec<String>,
    min_frequency: usize,
}

impl From<VocabularyData> for Vocabulary {
    fn from(d: VocabularyData) -> Self {
        let token_to_id = d
            .id_to_token
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary {
            id_to_token: d.id_to_token,
            min_frequency: d.min_frequency,
            token_to_id,
        }
    }
}

impl From<Vocabulary> for VocabularyData {
    fn from(v: Vocabulary) -> Self {
        VocabularyData {
            id_to_token: v.id_to_token,
            min_frequency: v.min_frequency,
        }
    }
}

impl Vocabulary {
    /// Count tokens across the training documents and keep those meeting
    /// the frequency threshold.
    pub fn build<'a, I>(train_docs: I, min_frequency: usize) -> Self
    where
        I: IntoIterator<Item = &'a [String]>,
    {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for doc in train_docs {
            for token in doc {
                *counts.entry(token.as_str()).or_default() += 1;
            }
        }
        let mut kept: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|&(t, n)| n >= min_frequency && t != PAD_TOKEN && t != UNK_TOKEN)
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

        let mut id_to_token = Vec::with_capacity(kept.len() + 2);
        id_to_token.push(PAD_TOKEN.to_string());
        id_to_token.push(UNK_TOKEN.to_string());
        id_to_token.extend(kept.into_iter().map(|(t, _)| t.to_string()));

        let token_to_id = id_to_token
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary {
            id_to_token,
            min_frequency,
            token_to_id,
        }
    }

    /// Id for a token; unknown tokens map to UNK.
    pub fn id(&self, token: &str) -> usize {
        self.token_to_id.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.id_to_token.get(id).map(String::as_str)
    }

    /// Total number of ids, including PAD and UNK.
    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        false // PAD and UNK are always present
    }

    pub fn min_frequency(&self) -> usize {
        self.min_frequency
    }
}
