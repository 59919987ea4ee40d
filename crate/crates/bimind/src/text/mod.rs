//! Text preparation: tokenization, POS attributes, vocabulary, content
//! features, and dataset loading.

mod dataset;
mod features;
mod pos;
mod tokenizer;
mod vocab;

pub use dataset::{load_jsonl, prepare, Instance, TokenizedDoc};
pub use features::{content_features, N_CONTENT_FEATURES};
pub use pos::{pos_tag, PosCategory, D_POS};
pub use tokenizer::{tokenize, UNK_TOKEN};
pub use vocab::{Vocabulary, PAD_ID, UNK_ID};
