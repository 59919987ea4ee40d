//! Synthetic corpus generators for controlled experiments.
//!
//! Two corpus kinds isolate the two evidence channels the model can use:
//!
//! * `content` — the label is decided by marker tokens placed *inside* the
//!   encoder window, so a text-only classifier can solve it. A tail beyond
//!   the window mirrors each marker with its counterpart from the other
//!   class, which makes the full-text bag of words identical across
//!   classes: retrieval similarity carries no label signal here.
//! * `knowledge` — the encoder window contains only neutral filler; the
//!   label-bearing tokens sit in a tail *beyond* the window. Only the
//!   memory path (which embeds the full text) can see them, so accuracy
//!   above chance requires retrieval.
//!
//! Both classes use marker tokens of identical length and suffix, so the
//! surface-feature vector carries no label signal either way.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::parse_kv;
use crate::error::{Error, Result};
use crate::text::Instance;

/// Which generator to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthKind {
    Content,
    Knowledge,
}

/// Parameters of a synthetic corpus.
#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub kind: SynthKind,
    /// Number of documents; labels alternate, so classes differ by at most one.
    pub n: usize,
    pub seed: u64,
    /// Encoder window length the corpus is built around.
    pub window: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            kind: SynthKind::Content,
            n: 400,
            seed: 7,
            window: 24,
        }
    }
}

/// Label-neutral filler vocabulary shared by both classes and both corpus
/// kinds. Mixed parts of speech keep the attention diagnostics non-trivial.
const FILLER: [&str; 48] = [
    "the", "a", "this", "that", "some", "every", "river", "stone", "meadow", "lantern", "harbor",
    "valley", "signal", "market", "garden", "bridge", "window", "journal", "report", "meeting",
    "morning", "evening", "walked", "turned", "opened", "closed", "carried", "watched", "noted",
    "gathered", "moved", "stayed", "quietly", "slowly", "often", "rarely", "nearly", "again",
    "green", "small", "steady", "plain", "distant", "common", "under", "over", "beside", "along",
];

/// Marker-token families. Within each position the class-1 and class-0
/// words share length and suffix, differing only in their first letter, so
/// every surface feature is distributed identically across classes.
const CONTENT_MARKERS: [[&str; 4]; 2] = [
    ["okara", "obona", "omira", "otova"],
    ["akara", "abona", "amira", "atova"],
];
const KNOWLEDGE_MARKERS: [[&str; 3]; 2] = [
    ["vupra", "velta", "vorin"],
    ["zupra", "zelta", "zorin"],
];

/// Copies of each knowledge marker in the evidence tail.
const EVIDENCE_REPEATS: usize = 3;

impl SynthSpec {
    /// Parse a `key = value` spec file body. Keys: `kind`, `n`, `seed`,
    /// `window`; missing keys keep their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut spec = SynthSpec::default();
        for (key, value) in parse_kv(text)? {
            match key.as_str() {
                "kind" => {
                    spec.kind = match value.as_str() {
                        "content" => SynthKind::Content,
                        "knowledge" => SynthKind::Knowledge,
                        other => {
                            return Err(Error::Config(format!(
                                "unknown corpus kind '{other}' (expected content or knowledge)"
                            )))
                        }
                    }
                }
                "n" => {
                    spec.n = value
                        .parse()
                        .map_err(|_| Error::Config(format!("bad n '{value}'")))?
                }
                "seed" => {
                    spec.seed = value
                        .parse()
                        .map_err(|_| Error::Config(format!("bad seed '{value}'")))?
                }
                "window" => {
                    spec.window = value
                        .parse()
                        .map_err(|_| Error::Config(format!("bad window '{value}'")))?
                }
                other => return Err(Error::Config(format!("unknown spec key '{other}'"))),
            }
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Config("need at least one document per class".into()));
        }
        if self.window < 8 {
            return Err(Error::Config("window must be at least 8 tokens".into()));
        }
        Ok(())
    }

    /// Generate the corpus. Deterministic in the spec.
    pub fn generate(&self) -> Result<Vec<Instance>> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let prefix = match self.kind {
            SynthKind::Content => "synth-c",
            SynthKind::Knowledge => "synth-k",
        };
        (0..self.n)
            .map(|i| {
                let label = (i % 2) as u8;
                let tokens = match self.kind {
                    SynthKind::Content => self.content_tokens(label, &mut rng),
                    SynthKind::Knowledge => self.knowledge_tokens(label, &mut rng),
                };
                Ok(Instance {
                    id: format!("{prefix}-{i:04}"),
                    text: tokens.join(" "),
                    label,
                })
            })
            .collect()
    }

    /// `window` tokens of filler with 2–3 in-window class markers, then a
    /// tail holding the counterpart marker of the *other* class for each one
    /// placed. Window readers see a clean class signal; whole-text bags are
    /// identical across classes, so embedding similarity cannot leak the
    /// label into the memory path.
    ///
    /// Every random draw happens the same number of times regardless of the
    /// label, so document shape is label-independent.
    fn content_tokens(&self, label: u8, rng: &mut ChaCha8Rng) -> Vec<String> {
        let mut tokens: Vec<String> = (0..self.window)
            .map(|_| (*FILLER.choose(rng).expect("filler pool is non-empty")).to_string())
            .collect();
        let n_markers = rng.gen_range(2..=3);
        let positions = rand::seq::index::sample(rng, self.window, n_markers);
        let family = &CONTENT_MARKERS[label as usize];
        let mirror = &CONTENT_MARKERS[1 - label as usize];
        let mut tail = Vec::with_capacity(n_markers);
        for pos in positions {
            let which = rng.gen_range(0..family.len());
            tokens[pos] = family[which].to_string();
            tail.push(mirror[which].to_string());
        }
        tail.shuffle(rng);
        tokens.extend(tail);
        tokens
    }

    /// `window` tokens of pure filler, then an evidence tail of class
    /// markers the encoder window never reaches.
    fn knowledge_tokens(&self, label: u8, rng: &mut ChaCha8Rng) -> Vec<String> {
        let mut tokens: Vec<String> = (0..self.window)
            .map(|_| (*FILLER.choose(rng).expect("filler pool is non-empty")).to_string())
            .collect();
        let family = &KNOWLEDGE_MARKERS[label as usize];
        let mut tail: Vec<String> = family
            .iter()
            .flat_map(|m| std::iter::repeat((*m).to_string()).take(EVIDENCE_REPEATS))
            .collect();
        tail.shuffle(rng);
        tokens.extend(tail);
        tokens
    }
}
