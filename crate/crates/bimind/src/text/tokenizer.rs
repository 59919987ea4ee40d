//! Rule-based tokenizer: lowercase, split on whitespace, keep runs of
//! alphanumeric characters together, and emit every other character as its
//! own single-character token.

/// Token substituted for an empty document. The tokenizer itself can never
/// produce this string from real text (angle brackets split).
pub const UNK_TOKEN: &str = "<unk>";

/// Deterministic lowercasing tokenizer.
///
/// Runs of alphanumeric characters form one token; punctuation and symbols
/// become single-character tokens; whitespace only separates. An input with
/// no tokens at all yields a single `<unk>` token so downstream shapes stay
/// non-empty (the condition is logged).
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut run = String::new();
    for ch in text.to_lowercase().chars() {
        if ch.is_alphanumeric() {
            run.push(ch);
        } else {
            if !run.is_empty() {
                tokens.push(std::mem::take(&mut run));
            }
            if !ch.is_whitespace() {
                tokens.push(ch.to_string());
            }
        }
    }
    if !run.is_empty() {
        tokens.push(run);
    }
    if tokens.is_empty() {
        log::warn!("document produced no tokens; substituting {UNK_TOKEN}");
        tokens.push(UNK_TOKEN.to_string());
    }
    tokens
}

/// True for tokens the feature extractor counts as punctuation: a single
/// non-alphanumeric character.
pub(crate) fn is_punctuation(token: &str) -> bool {
    let mut chars = token.chars();
    matches!((chars.next(), chars.next()), (Some(c), None) if !c.is_alphanumeric())
}
