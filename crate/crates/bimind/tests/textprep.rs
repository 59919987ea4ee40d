//! Text preparation oracles: forced tokenizer/tagger examples, vocabulary
//! ordering rules, a hand-recounted feature vector, dataset validation, and
//! the embedding-gather gradient.

use std::io::Write as _;

use bimind::error::Error;
use bimind::tensor::{Tape, Tensor};
use bimind::text::{
    content_features, load_jsonl, pos_tag, prepare, tokenize, Instance, PosCategory, Vocabulary,
    D_POS, PAD_ID, UNK_ID,
};
use proptest::prelude::*;

// ── tokenizer ───────────────────────────────────────────────────────

#[test]
fn tokenize_splits_words_and_keeps_punctuation() {
    assert_eq!(tokenize("Labubu is real."), vec!["labubu", "is", "real", "."]);
}

#[test]
fn tokenize_empty_text_yields_single_unk() {
    assert_eq!(tokenize(""), vec!["<unk>"]);
    assert_eq!(tokenize("   \t\n "), vec!["<unk>"]);
}

#[test]
fn tokenize_hyphenated_terms_split_into_parts() {
    assert_eq!(
        tokenize("COVID-19 spreads"),
        vec!["covid", "-", "19", "spreads"]
    );
}

#[test]
fn tokenize_never_produces_the_unk_literal_from_text() {
    // Angle brackets split, so "<unk>" in input cannot collide with the
    // reserved token.
    assert_eq!(tokenize("<unk>"), vec!["<", "unk", ">"]);
}

// ── POS tagging ─────────────────────────────────────────────────────

#[test]
fn pos_examples_follow_lexicon_and_suffix_rules() {
    assert_eq!(pos_tag("quickly"), PosCategory::Adv);
    assert_eq!(pos_tag("is"), PosCategory::VerbAux);
    assert_eq!(pos_tag("labubu"), PosCategory::Other);
    assert_eq!(pos_tag("dangerous"), PosCategory::Adj);
    assert_eq!(pos_tag("statement"), PosCategory::Noun);
    assert_eq!(pos_tag("criticize"), PosCategory::VerbAux);
}

#[test]
fn pos_suffix_requires_strictly_longer_token() {
    // "ate" is exactly the suffix, so the rule must not fire.
    assert_eq!(pos_tag("ate"), PosCategory::Other);
    assert_eq!(pos_tag("relocate"), PosCategory::VerbAux);
}

#[test]
fn pos_lexicon_wins_over_suffix() {
    // "her" ends in -er but is a closed-class word.
    assert_eq!(pos_tag("her"), PosCategory::Other);
    assert_eq!(pos_tag("never"), PosCategory::Adv);
    assert_eq!(pos_tag("writer"), PosCategory::Noun);
}

proptest! {
    #[test]
    fn prop_pos_one_hot_is_exactly_one(token in "[a-z]{1,12}") {
        let v = pos_tag(&token).one_hot();
        prop_assert_eq!(v.len(), D_POS);
        prop_assert_eq!(v.iter().sum::<f64>(), 1.0);
        prop_assert_eq!(v.iter().filter(|&&x| x == 1.0).count(), 1);
    }

    #[test]
    fn prop_pos_total_on_arbitrary_strings(token in "\\PC{1,8}") {
        let _ = pos_tag(&token); // must not panic
    }
}

// ── vocabulary ──────────────────────────────────────────────────────

fn doc(tokens: &[&str]) -> Vec<String> {
    tokens.iter().map(|s| s.to_string()).collect()
}

#[test]
fn vocab_orders_by_frequency_then_alphabetically() {
    let docs = [doc(&["b", "a", "a", "c", "c", "c"])];
    let v = Vocabulary::build(docs.iter().map(Vec::as_slice), 2);
    assert_eq!(v.token(PAD_ID), Some("<pad>"));
    assert_eq!(v.token(UNK_ID), Some("<unk>"));
    assert_eq!(v.token(2), Some("c"), "highest frequency first");
    assert_eq!(v.token(3), Some("a"));
    assert_eq!(v.len(), 4, "b is below min_frequency");
    assert_eq!(v.id("b"), UNK_ID);
    assert_eq!(v.id("zzz"), UNK_ID);
}

#[test]
fn vocab_breaks_frequency_ties_alphabetically() {
    let docs = [doc(&["c", "a", "c", "a"])];
    let v = Vocabulary::build(docs.iter().map(Vec::as_slice), 2);
    assert_eq!(v.token(2), Some("a"));
    assert_eq!(v.token(3), Some("c"));
}

#[test]
fn vocab_round_trips_through_json() {
    let docs = [doc(&["x", "x", "y", "y", "y"])];
    let v = Vocabulary::build(docs.iter().map(Vec::as_slice), 2);
    let json = serde_json::to_string(&v).unwrap();
    let back: Vocabulary = serde_json::from_str(&json).unwrap();
    assert_eq!(back.len(), v.len());
    assert_eq!(back.id("x"), v.id("x"));
    assert_eq!(back.id("missing"), UNK_ID);
}

// ── content features ────────────────────────────────────────────────

#[test]
fn features_match_hand_recount() {
    // "NASA confirms COVID-19 spreads quickly."
    // tokens: nasa confirms covid - 19 spreads quickly .   (8 tokens)
    let text = "NASA confirms COVID-19 spreads quickly.";
    let tokens = tokenize(text);
    assert_eq!(tokens.len(), 8);
    // Pretend every token is in-vocabulary except "covid".
    let ids: Vec<usize> = tokens
        .iter()
        .map(|t| if t == "covid" { UNK_ID } else { 50 })
        .collect();
    let f = content_features(text, &tokens, &ids, 16);

    let expect_count = 8.0 / 16.0;
    let expect_ttr = 1.0;
    // lengths: 4+8+5+1+2+7+7+1 = 35
    let expect_mean_len = (35.0 / 8.0) / 15.0;
    let expect_punct = 2.0 / 8.0; // "-" and "."
    let expect_digit = 1.0 / 8.0; // "19"
    // raw words: NASA, confirms, COVID-19, spreads, quickly. → 2 of 5 all-caps
    let expect_upper = 2.0 / 5.0;
    // POS: confirms+spreads = VERB/AUX (2), quickly = ADV (1), rest OTHER (5)
    let h = -(0.25f64 * 0.25f64.ln() + 0.125 * 0.125f64.ln() + 0.625 * 0.625f64.ln());
    let expect_entropy = h / 5.0f64.ln();
    let expect_unk = 1.0 / 8.0;

    let want = [
        expect_count,
        expect_ttr,
        expect_mean_len,
        expect_punct,
        expect_digit,
        expect_upper,
        expect_entropy,
        expect_unk,
    ];
    assert_eq!(f.len(), want.len());
    for (i, (got, want)) in f.iter().zip(&want).enumerate() {
        assert!(
            (got - want).abs() < 1e-12,
            "feature {i}: got {got}, want {want}"
        );
    }
}

#[test]
fn features_degenerate_cases() {
    // All-unique tokens → type–token ratio 1; no punctuation → ratio 0.
    let text = "alpha beta gamma";
    let tokens = tokenize(text);
    let ids = vec![2, 3, 4];
    let f = content_features(text, &tokens, &ids, 256);
    assert_eq!(f[1], 1.0);
    assert_eq!(f[3], 0.0);
    assert_eq!(f[7], 0.0);
    assert!(f.iter().all(|&v| (0.0..=1.0).contains(&v)));
}

proptest! {
    #[test]
    fn prop_features_are_bounded(text in "\\PC{0,60}") {
        let tokens = tokenize(&text);
        let ids: Vec<usize> = tokens.iter().enumerate()
            .map(|(i, _)| if i % 3 == 0 { UNK_ID } else { i + 2 })
            .collect();
        let f = content_features(&text, &tokens, &ids, 32);
        prop_assert_eq!(f.len(), 8);
        prop_assert!(f.iter().all(|&v| (0.0..=1.0).contains(&v) && v.is_finite()));
    }
}

// ── dataset loading and preparation ─────────────────────────────────

fn write_jsonl(lines: &[&str]) -> tempfile::NamedTempFile {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    for l in lines {
        writeln!(f, "{l}").unwrap();
    }
    f.flush().unwrap();
    f
}

#[test]
fn load_jsonl_reads_records_and_skips_blank_lines() {
    let f = write_jsonl(&[
        r#"{"id":"a","text":"one two","label":1}"#,
        "",
        r#"{"id":"b","text":"three","label":0}"#,
    ]);
    let got = load_jsonl(f.path()).unwrap();
    assert_eq!(got.len(), 2);
    assert_eq!(got[0].id, "a");
    assert_eq!(got[1].label, 0);
}

#[test]
fn load_jsonl_rejects_duplicate_ids() {
    let f = write_jsonl(&[
        r#"{"id":"a","text":"x","label":1}"#,
        r#"{"id":"a","text":"y","label":0}"#,
    ]);
    match load_jsonl(f.path()) {
        Err(Error::DuplicateId(id)) => assert_eq!(id, "a"),
        other => panic!("expected duplicate id, got {other:?}"),
    }
}

#[test]
fn load_jsonl_rejects_bad_labels_and_malformed_lines() {
    let f = write_jsonl(&[r#"{"id":"a","text":"x","label":2}"#]);
    assert!(matches!(load_jsonl(f.path()), Err(Error::BadLabel { got: 2 })));

    let f = write_jsonl(&[
        r#"{"id":"a","text":"x","label":1}"#,
        r#"{"id":"b","text":"#,
    ]);
    match load_jsonl(f.path()) {
        Err(Error::BadRecord { line: 2, .. }) => {}
        other => panic!("expected bad record on line 2, got {other:?}"),
    }
}

#[test]
fn load_jsonl_rejects_empty_dataset() {
    let f = write_jsonl(&[]);
    assert!(matches!(load_jsonl(f.path()), Err(Error::EmptyDataset(_))));
}

#[test]
fn prepare_truncates_ids_but_features_see_full_text() {
    let docs = [tokenize("a b c d e f g h i j")];
    let vocab = Vocabulary::build(docs.iter().map(Vec::as_slice), 1);
    let inst = Instance {
        id: "t".into(),
        text: "a b c d e f g h i j".into(),
        label: 1,
    };
    let doc = prepare(&inst, &vocab, 4);
    assert_eq!(doc.token_ids.len(), 4);
    assert_eq!(doc.pos.len(), 4);
    assert_eq!(doc.mask, vec![true; 4]);
    // 10 tokens over a window of 4 saturates the count feature.
    assert_eq!(doc.features[0], 1.0);
    assert_eq!(doc.label, 1);
}

#[test]
fn prepare_maps_unseen_tokens_to_unk() {
    let docs = [tokenize("known words only known words only")];
    let vocab = Vocabulary::build(docs.iter().map(Vec::as_slice), 2);
    let inst = Instance {
        id: "t".into(),
        text: "known mystery".into(),
        label: 0,
    };
    let doc = prepare(&inst, &vocab, 8);
    assert_eq!(doc.token_ids[0], vocab.id("known"));
    assert_eq!(doc.token_ids[1], UNK_ID);
}

// ── embedding gather ────────────────────────────────────────────────

#[test]
fn embedding_gather_gradient_marks_used_rows() {
    let mut tape = Tape::new();
    let table = tape.leaf(&Tensor::new(vec![4, 3], (0..12).map(f64::from).collect()).unwrap());
    let rows = tape.gather_rows(table, &[0, 2, 2]).unwrap();
    assert_eq!(tape.shape(rows), &[3, 3]);
    let loss = tape.sum_all(rows).unwrap();
    tape.backward(loss).unwrap();
    let g = tape.grad(table).unwrap();
    let want = [
        1.0, 1.0, 1.0, // row 0 used once
        0.0, 0.0, 0.0, // row 1 unused
        2.0, 2.0, 2.0, // row 2 used twice
        0.0, 0.0, 0.0, // row 3 unused
    ];
    assert_eq!(g, want);
}
