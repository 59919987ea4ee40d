//! Hand-crafted surface features of a document, all normalized into [0,1].

use crate::text::pos::{pos_tag, D_POS};
use crate::text::tokenizer::is_punctuation;
use crate::text::vocab::UNK_ID;

/// Dimension of the content-feature vector.
pub const N_CONTENT_FEATURES: usize = 8;

/// Token length beyond which mean-token-length saturates at 1.
const MEAN_LEN_SCALE: f64 = 15.0;

fn clip01(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

/// Compute the 8 content features of a document.
///
/// `tokens`/`token_ids` are the full (untruncated) token sequence and its
/// vocabulary ids; `raw_text` is consulted only for the uppercase-word
/// ratio, which is lost after lowercasing. Every entry lands in [0,1] and
/// the result is deterministic given the inputs.
///
/// Features, in order: token count ÷ window length, type–token ratio, mean
/// token length ÷ 15, punctuation-token ratio, digit-token ratio,
/// uppercase-word ratio, POS-category entropy ÷ ln 5, UNK-token ratio.
pub fn content_features(
    raw_text: &str,
    tokens: &[String],
    token_ids: &[usize],
    l_max: usize,
) -> Vec<f64> {
    assert_eq!(tokens.len(), token_ids.len(), "tokens and ids must align");
    assert!(!tokens.is_empty(), "tokenizer guarantees at least one token");
    let n = tokens.len() as f64;

    let count_norm = clip01(tokens.len() as f64 / l_max.max(1) as f64);

    let distinct = {
        let mut seen: Vec<&str> = tokens.iter().map(String::as_str).collect();
        seen.sort_unstable();
        seen.dedup();
        seen.len()
    };
    let type_token_ratio = clip01(distinct as f64 / n);

    let mean_len = tokens.iter().map(|t| t.chars().count()).sum::<usize>() as f64 / n;
    let mean_len_norm = clip01(mean_len / MEAN_LEN_SCALE);

    let punct = tokens.iter().filter(|t| is_punctuation(t)).count() as f64;
    let punct_ratio = clip01(punct / n);

    let digit = tokens
        .iter()
        .filter(|t| t.chars().any(|c| c.is_ascii_digit()))
        .count() as f64;
    let digit_ratio = clip01(digit / n);

    let words: Vec<&str> = raw_text.split_whitespace().collect();
    let upper = words
        .iter()
        .filter(|w| {
            let alpha: Vec<char> = w.chars().filter(|c| c.is_alphabetic()).collect();
            alpha.len() >= 2 && alpha.iter().all(|c| c.is_uppercase())
        })
        .count() as f64;
    let upper_ratio = if words.is_empty() {
        0.0
    } else {
        clip01(upper / words.len() as f64)
    };

    let mut pos_counts = [0usize; D_POS];
    for t in tokens {
        pos_counts[pos_tag(t).index()] += 1;
    }
    let entropy: f64 = pos_counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum();
    let entropy_norm = clip01(entropy / (D_POS as f64).ln());

    let unk = token_ids.iter().filter(|&&id| id == UNK_ID).count() as f64;
    let unk_ratio = clip01(unk / n);

    vec![
        count_norm,
        type_token_ratio,
        mean_len_norm,
        punct_ratio,
        digit_ratio,
        upper_ratio,
        entropy_norm,
        unk_ratio,
    ]
}
