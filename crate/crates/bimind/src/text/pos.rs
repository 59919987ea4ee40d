//! Coarse part-of-speech attributes.
//!
//! Five categories keep the attribute vector small: verbs and auxiliaries
//! share a class, then nouns, adjectives, adverbs, and everything else. A
//! bundled lexicon of closed-class and frequent words is consulted first;
//! unknown words fall through to suffix rules, then to OTHER.

use std::collections::HashMap;
use std::sync::OnceLock;

/// Size of the one-hot POS attribute vector.
pub const D_POS: usize = 5;

/// Coarse POS category; the discriminant is the one-hot index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PosCategory {
    VerbAux = 0,
    Noun = 1,
    Adj = 2,
    Adv = 3,
    Other = 4,
}

impl PosCategory {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn one_hot(self) -> [f64; D_POS] {
        let mut v = [0.0; D_POS];
        v[self.index()] = 1.0;
        v
    }
}

const VERB_AUX_WORDS: &[&str] = &[
    "is", "am", "are", "was", "were", "be", "been", "being", "has", "have", "had", "do", "does",
    "did", "will", "would", "can", "could", "shall", "should", "may", "might", "must", "get",
    "got", "make", "made", "say", "said", "says", "go", "went", "goes", "see", "seen", "saw",
    "know", "known", "knew", "take", "took", "come", "came", "think", "thought", "use", "find",
    "found", "give", "gave", "tell", "told", "claim", "claims", "claimed", "show", "shows",
    "shown", "prove", "proves", "proved", "cause", "causes", "caused", "spread", "spreads",
    "share", "shared", "shares", "post", "posted", "report", "reported", "deny", "denies",
    "denied", "confirm", "confirms", "confirmed",
];

const NOUN_WORDS: &[&str] = &[
    "people", "person", "time", "year", "years", "day", "days", "week", "month", "way", "man",
    "woman", "world", "life", "thing", "things", "government", "study", "studies", "reports",
    "news", "fact", "facts", "virus", "vaccine", "vaccines", "disease", "health", "science",
    "scientist", "scientists", "doctor", "doctors", "expert", "experts", "water", "video",
    "photo", "image", "story", "stories", "article", "articles", "posts", "media", "internet",
    "source", "sources", "evidence", "truth", "lie", "lies", "hoax", "rumor", "rumors",
];

const ADJ_WORDS: &[&str] = &[
    "good", "bad", "new", "first", "last", "long", "great", "little", "own", "old", "right",
    "wrong", "big", "high", "small", "large", "real", "true", "false", "fake", "many", "few",
    "safe", "deadly", "viral", "secret", "hidden", "same", "different",
];

const ADV_WORDS: &[&str] = &[
    "not", "also", "very", "just", "now", "then", "here", "there", "only", "never", "always",
    "really", "often", "again", "soon", "too", "quite", "still", "already", "yet", "even",
    "maybe", "perhaps",
];

const OTHER_WORDS: &[&str] = &[
    "the", "a", "an", "and", "or", "but", "if", "because", "as", "of", "in", "on", "at", "by",
    "for", "with", "about", "against", "between", "into", "through", "during", "before",
    "after", "to", "from", "up", "down", "out", "off", "over", "under", "this", "that", "these",
    "those", "i", "you", "he", "she", "it", "we", "they", "them", "his", "her", "hers", "its",
    "our", "ours", "your", "yours", "their", "theirs", "my", "mine", "me", "him", "us", "who",
    "whom", "whose", "what", "which", "when", "where", "why", "how", "no", "yes", "all", "any",
    "both", "each", "more", "most", "some", "such", "than", "so", "while",
];

fn lexicon() -> &'static HashMap<&'static str, PosCategory> {
    static LEXICON: OnceLock<HashMap<&'static str, PosCategory>> = OnceLock::new();
    LEXICON.get_or_init(|| {
        let groups = [
            (VERB_AUX_WORDS, PosCategory::VerbAux),
            (NOUN_WORDS, PosCategory::Noun),
            (ADJ_WORDS, PosCategory::Adj),
            (ADV_WORDS, PosCategory::Adv),
            (OTHER_WORDS, PosCategory::Other),
        ];
        let mut map = HashMap::new();
        for (words, cat) in groups {
            for &w in words {
                let prev = map.insert(w, cat);
                debug_assert!(prev.is_none(), "duplicate lexicon entry {w}");
            }
        }
        map
    })
}

/// Suffix rules tried in order after the lexicon; a suffix only fires when
/// the token is strictly longer than it.
const SUFFIX_RULES: &[(&str, PosCategory)] = &[
    ("ly", PosCategory::Adv),
    ("ous", PosCategory::Adj),
    ("ful", PosCategory::Adj),
    ("ive", PosCategory::Adj),
    ("al", PosCategory::Adj),
    ("ize", PosCategory::VerbAux),
    ("ate", PosCategory::VerbAux),
    ("ify", PosCategory::VerbAux),
    ("tion", PosCategory::Noun),
    ("ness", PosCategory::Noun),
    ("ment", PosCategory::Noun),
    ("er", PosCategory::Noun),
    ("ism", PosCategory::Noun),
];

/// Total function from token to coarse POS category.
pub fn pos_tag(token: &str) -> PosCategory {
    if let Some(&cat) = lexicon().get(token) {
        return cat;
    }
    for &(suffix, cat) in SUFFIX_RULES {
        if token.len() > suffix.len() && token.ends_with(suffix) {
            return cat;
        }
    }
    PosCategory::Other
}
