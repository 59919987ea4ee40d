//! Pipeline tests: configuration parsing, stratified splitting, the
//! optimizer against closed-form oracles, training/evaluation behavior,
//! checkpoint fidelity, leakage guards, and the synthetic corpora.

use std::collections::HashSet;

use proptest::prelude::*;

use bimind::diagnostics::{routing_report, vox_records};
use bimind::memory::{HashedBowProvider, MemoryBank};
use bimind::model::FusionMode;
use bimind::pipeline::{
    attention_report, evaluate, leakage_audit, stratified_split, train, Adam, AdamState,
    Checkpoint, RunConfig, SynthKind, SynthSpec, TrainOutcome,
};
use bimind::tensor::{ParamId, ParamStore, Tensor};
use bimind::text::{pos_tag, tokenize, Instance, UNK_ID};
use bimind::Error;

// ───────────────────────── helpers ─────────────────────────

fn content_corpus(n: usize, seed: u64) -> Vec<Instance> {
    SynthSpec {
        kind: SynthKind::Content,
        n,
        seed,
        window: 24,
    }
    .generate()
    .expect("content corpus")
}

fn knowledge_corpus(n: usize, seed: u64) -> Vec<Instance> {
    SynthSpec {
        kind: SynthKind::Knowledge,
        n,
        seed,
        window: 24,
    }
    .generate()
    .expect("knowledge corpus")
}

/// Small-but-trainable configuration for integration tests.
fn tiny_config() -> RunConfig {
    RunConfig {
        fusion_mode: FusionMode::Average,
        lambda_agree: 0.0,
        d: 16,
        d_c: 8,
        d_s: 32,
        layers: 1,
        heads: 4,
        k_neighbors: 3,
        dropout: 0.0,
        l_max: 24,
        seed: 42,
        min_frequency: 2,
        learning_rate: 0.02,
        batch_size: 8,
        max_epochs: 30,
        patience: 6,
        grad_clip_norm: 1.0,
        ..RunConfig::default()
    }
}

fn single_param_store(values: Vec<f64>) -> ParamStore {
    let mut store = ParamStore::new();
    store.register("p", Tensor::from_vec(values));
    store
}

// ───────────────────────── configuration ─────────────────────────

#[test]
fn config_defaults_survive_empty_text() {
    let cfg = RunConfig::parse("").expect("empty config");
    assert_eq!(cfg.d, 128);
    assert_eq!(cfg.d_s, 256);
    assert_eq!(cfg.layers, 2);
    assert_eq!(cfg.heads, 4);
    assert_eq!(cfg.k_neighbors, 5);
    assert_eq!(cfg.batch_size, 64);
    assert_eq!(cfg.max_epochs, 50);
    assert_eq!(cfg.patience, 3);
    assert_eq!(cfg.seed, 42);
    assert_eq!(cfg.fusion_mode, FusionMode::EntropyGate);
    assert_eq!(cfg.lambda_agree, 0.1);
    assert_eq!(cfg.learning_rate, 1e-5);
    assert_eq!(cfg.grad_clip_norm, 1.0);
    assert_eq!(cfg.dropout, 0.3);
    assert_eq!(cfg.l_max, 256);
    assert_eq!(cfg.split, [0.8, 0.1, 0.1]);
    assert!(!cfg.disable_aga && !cfg.disable_retrieval);
}

#[test]
fn config_parses_keys_comments_and_split() {
    let text = "\
# run settings
fusion_mode = product_of_experts   # inline comment
lambda_agree = 0.5
d = 32
heads = 8
split = 0.6 / 0.2 / 0.2
disable_aga = true
seed = 7
";
    let cfg = RunConfig::parse(text).expect("config");
    assert_eq!(cfg.fusion_mode, FusionMode::ProductOfExperts);
    assert_eq!(cfg.lambda_agree, 0.5);
    assert_eq!(cfg.d, 32);
    assert_eq!(cfg.heads, 8);
    assert_eq!(cfg.split, [0.6, 0.2, 0.2]);
    assert!(cfg.disable_aga);
    assert_eq!(cfg.seed, 7);
    // Untouched keys keep defaults.
    assert_eq!(cfg.batch_size, 64);
}

#[test]
fn config_rejects_unknown_and_duplicate_keys() {
    assert!(matches!(
        RunConfig::parse("learning_rte = 0.1"),
        Err(Error::Config(_))
    ));
    match RunConfig::parse("d = 32\nd = 64") {
        Err(Error::BadRecord { line, .. }) => assert_eq!(line, 2),
        other => panic!("expected duplicate-key error, got {other:?}"),
    }
    assert!(matches!(
        RunConfig::parse("d = "),
        Err(Error::BadRecord { .. })
    ));
    assert!(matches!(
        RunConfig::parse("just words"),
        Err(Error::BadRecord { .. })
    ));
}

#[test]
fn config_validation_rejects_bad_values() {
    let bad = [
        "split = 0.5 / 0.4 / 0.2", // sums to 1.1
        "learning_rate = -1",
        "batch_size = 0",
        "patience = 0",
        "max_epochs = 0",
        "grad_clip_norm = 0",
        "dropout = 1.0",
        "lambda_agree = -0.1",
        "d = 30\nheads = 4", // not a multiple
        "layers = 0",
        "d_s = 0",
        "d_c = 5", // neither 0 nor the feature count
        "k_neighbors = 0",
        "l_max = 0",
        "fusion_mode = bogus",
    ];
    for text in bad {
        assert!(RunConfig::parse(text).is_err(), "accepted {text:?}");
    }
    // Zero learning rate is legal: it underpins the frozen-run early-stop
    // behavior checked further down.
    assert!(RunConfig::parse("learning_rate = 0").is_ok());
    assert!(RunConfig::parse("d_c = 0").is_ok());
}

#[test]
fn ablation_switches_rewrite_mode_and_lambda() {
    let mut cfg = RunConfig::default();
    assert_eq!(cfg.effective_mode(), FusionMode::EntropyGate);
    cfg.disable_gated_fusion = true;
    assert_eq!(cfg.effective_mode(), FusionMode::Average);

    cfg = RunConfig {
        fusion_mode: FusionMode::AgreementHead,
        disable_agreement_head: true,
        ..RunConfig::default()
    };
    assert_eq!(cfg.effective_mode(), FusionMode::Average);

    cfg = RunConfig {
        fusion_mode: FusionMode::ProductOfExperts,
        disable_gated_fusion: true,
        disable_agreement_head: true,
        ..RunConfig::default()
    };
    assert_eq!(cfg.effective_mode(), FusionMode::ProductOfExperts);

    let mut cfg = RunConfig::default();
    assert_eq!(cfg.effective_lambda(), 0.1);
    cfg.disable_kl = true;
    assert_eq!(cfg.effective_lambda(), 0.0);
}

#[test]
fn config_digest_tracks_content() {
    let a = RunConfig::default();
    let b = RunConfig::default();
    assert_eq!(a.digest(), b.digest());
    assert_eq!(a.digest().len(), 16);

    let c = RunConfig {
        seed: 43,
        ..RunConfig::default()
    };
    assert_ne!(a.digest(), c.digest());

    // The digest must also see every ablation switch.
    let d = RunConfig {
        disable_retrieval: true,
        ..RunConfig::default()
    };
    assert_ne!(a.digest(), d.digest());
}

// ───────────────────────── splitting ─────────────────────────

fn labeled(n: usize, label_of: impl Fn(usize) -> u8) -> Vec<Instance> {
    (0..n)
        .map(|i| Instance {
            id: format!("doc-{i:03}"),
            text: format!("text {i}"),
            label: label_of(i),
        })
        .collect()
}

#[test]
fn split_ten_docs_gives_eight_one_one() {
    let data = labeled(10, |i| (i % 2) as u8);
    let split = stratified_split(&data, [0.8, 0.1, 0.1], 1).expect("split");
    assert_eq!(split.train.len(), 8);
    assert_eq!(split.val.len(), 1);
    assert_eq!(split.test.len(), 1);
    let ones = split.train.iter().filter(|i| i.label == 1).count();
    assert_eq!(ones, 4, "train keeps the 50/50 mix");
}

#[test]
fn split_partitions_without_loss_or_overlap() {
    let data = labeled(37, |i| u8::from(i % 3 == 0));
    let split = stratified_split(&data, [0.8, 0.1, 0.1], 9).expect("split");
    let mut seen: HashSet<&str> = HashSet::new();
    for inst in split
        .train
        .iter()
        .chain(&split.val)
        .chain(&split.test)
    {
        assert!(seen.insert(&inst.id), "{} appears twice", inst.id);
    }
    assert_eq!(seen.len(), data.len());
}

#[test]
fn split_is_deterministic_in_the_seed() {
    let data = labeled(30, |i| (i % 2) as u8);
    let ids = |s: &bimind::pipeline::Split| {
        (
            s.train.iter().map(|i| i.id.clone()).collect::<Vec<_>>(),
            s.val.iter().map(|i| i.id.clone()).collect::<Vec<_>>(),
            s.test.iter().map(|i| i.id.clone()).collect::<Vec<_>>(),
        )
    };
    let a = ids(&stratified_split(&data, [0.8, 0.1, 0.1], 5).unwrap());
    let b = ids(&stratified_split(&data, [0.8, 0.1, 0.1], 5).unwrap());
    let c = ids(&stratified_split(&data, [0.8, 0.1, 0.1], 6).unwrap());
    assert_eq!(a, b);
    assert_ne!(a, c, "different seeds should shuffle differently");
}

#[test]
fn split_reports_which_part_came_up_empty() {
    let data = labeled(2, |i| (i % 2) as u8);
    match stratified_split(&data, [0.5, 0.5, 0.0], 1) {
        Err(Error::EmptySplit { which }) => assert_eq!(which, "test"),
        other => panic!("expected empty test split, got {other:?}"),
    }
    assert!(matches!(
        stratified_split(&[], [0.8, 0.1, 0.1], 1),
        Err(Error::EmptyDataset(_))
    ));
    assert!(matches!(
        stratified_split(&data, [0.5, 0.4, 0.2], 1),
        Err(Error::Config(_))
    ));
}

/// Independent largest-remainder oracle for the global split sizes.
fn lr_oracle(total: usize, ratios: [f64; 3]) -> [usize; 3] {
    let quotas: Vec<f64> = ratios.iter().map(|r| total as f64 * r).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut rem: Vec<(usize, f64)> = quotas
        .iter()
        .enumerate()
        .map(|(i, q)| (i, q - q.floor()))
        .collect();
    rem.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let missing = total - counts.iter().sum::<usize>();
    for &(slot, _) in rem.iter().take(missing) {
        counts[slot] += 1;
    }
    [counts[0], counts[1], counts[2]]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Split sizes follow largest-remainder apportionment exactly, and each
    /// split's class mix stays within one instance of the corpus mix scaled
    /// to the realized split size.
    #[test]
    fn split_sizes_and_mix_match_oracle(
        n in 8usize..120,
        ones in 0u32..=100,
        seed in 0u64..1000,
    ) {
        let data = labeled(n, |i| {
            u8::from((i as u64 * 2_654_435_761) % 100 < u64::from(ones))
        });
        let n1 = data.iter().filter(|d| d.label == 1).count();
        let n0 = n - n1;
        // Both classes must be present and populous enough that no split
        // can legitimately come up empty.
        prop_assume!(n0 >= 4 && n1 >= 4);

        let ratios = [0.8, 0.1, 0.1];
        let split = match stratified_split(&data, ratios, seed) {
            Ok(s) => s,
            Err(Error::EmptySplit { .. }) => return Ok(()), // tiny corpora may not fill three splits
            Err(e) => panic!("unexpected error {e:?}"),
        };
        let sizes = lr_oracle(n, ratios);
        prop_assert_eq!(split.train.len(), sizes[0]);
        prop_assert_eq!(split.val.len(), sizes[1]);
        prop_assert_eq!(split.test.len(), sizes[2]);

        for part in [&split.train, &split.val, &split.test] {
            let ones_here = part.iter().filter(|d| d.label == 1).count() as f64;
            let expected = n1 as f64 * part.len() as f64 / n as f64;
            prop_assert!(
                (ones_here - expected).abs() < 1.0 + 1e-9,
                "class mix off: {} ones, expected {:.3} of {}",
                ones_here, expected, part.len()
            );
        }
    }
}

// ───────────────────────── optimizer ─────────────────────────

#[test]
fn adam_first_step_moves_by_learning_rate() {
    // With a fresh state and one unclipped gradient g, bias correction makes
    // the update exactly lr·g/(|g|+ε).
    let mut store = single_param_store(vec![1.0]);
    let mut adam = Adam::new(&store, 0.1, 1e9).expect("adam");
    let report = adam.step(&mut store, &[Some(vec![1.0])]).expect("step");
    assert!(!report.clipped && !report.skipped);
    assert!((report.grad_norm - 1.0).abs() < 1e-15);
    let got = store.get(ParamId(0)).data[0];
    let want = 1.0 - 0.1 * (1.0 / (1.0 + 1e-8));
    assert!((got - want).abs() < 1e-15, "got {got}, want {want}");
}

#[test]
fn adam_constant_gradient_keeps_stepping_at_lr() {
    // The bias-corrected ratio m̂/√v̂ is 1 for a constant gradient, so each
    // step moves ≈ lr regardless of the gradient's size.
    let mut store = single_param_store(vec![0.0]);
    let mut adam = Adam::new(&store, 0.05, 1e9).expect("adam");
    for _ in 0..4 {
        adam.step(&mut store, &[Some(vec![0.25])]).expect("step");
    }
    let got = store.get(ParamId(0)).data[0];
    assert!(
        (got + 4.0 * 0.05).abs() < 1e-6,
        "four constant steps should move ≈ 4·lr, got {got}"
    );
}

#[test]
fn adam_zero_gradient_changes_nothing() {
    let mut store = single_param_store(vec![3.5, -2.0]);
    let mut adam = Adam::new(&store, 0.1, 1.0).expect("adam");
    let report = adam.step(&mut store, &[Some(vec![0.0, 0.0])]).expect("step");
    assert_eq!(report.grad_norm, 0.0);
    assert_eq!(store.get(ParamId(0)).data, vec![3.5, -2.0]);
    let state = adam.state();
    assert_eq!(state.t, 1, "a zero step still advances time");
    assert!(state.m[0].iter().all(|&v| v == 0.0));
}

#[test]
fn adam_clips_by_global_norm_before_moments() {
    // Gradient [3,4] has norm 5; clip 0.5 scales it by 0.1, and the first
    // moment must be built from the clipped gradient.
    let mut store = single_param_store(vec![0.0, 0.0]);
    let mut adam = Adam::new(&store, 0.1, 0.5).expect("adam");
    let report = adam.step(&mut store, &[Some(vec![3.0, 4.0])]).expect("step");
    assert!(report.clipped);
    assert!((report.grad_norm - 5.0).abs() < 1e-12);
    let state = adam.state();
    let want_m = [0.1 * 0.3, 0.1 * 0.4]; // (1−β1)·g_clipped
    assert!((state.m[0][0] - want_m[0]).abs() < 1e-15);
    assert!((state.m[0][1] - want_m[1]).abs() < 1e-15);
}

#[test]
fn adam_global_norm_spans_parameters() {
    // Two params with gradients [3] and [4]: global norm 5 crosses the
    // clip threshold even though each alone would not.
    let mut store = ParamStore::new();
    store.register("a", Tensor::from_vec(vec![0.0]));
    store.register("b", Tensor::from_vec(vec![0.0]));
    let mut adam = Adam::new(&store, 0.1, 4.5).expect("adam");
    let report = adam
        .step(&mut store, &[Some(vec![3.0]), Some(vec![4.0])])
        .expect("step");
    assert!(report.clipped);
    assert!((report.grad_norm - 5.0).abs() < 1e-12);
}

#[test]
fn adam_skips_non_finite_gradients() {
    let mut store = single_param_store(vec![1.0]);
    let mut adam = Adam::new(&store, 0.1, 1.0).expect("adam");
    let report = adam
        .step(&mut store, &[Some(vec![f64::NAN])])
        .expect("step");
    assert!(report.skipped);
    assert_eq!(store.get(ParamId(0)).data, vec![1.0], "no-op on NaN");
    assert_eq!(adam.state().t, 0, "skipped steps do not advance time");
}

#[test]
fn adam_leaves_unused_parameters_alone() {
    let mut store = ParamStore::new();
    store.register("used", Tensor::from_vec(vec![1.0]));
    store.register("unused", Tensor::from_vec(vec![2.0]));
    let mut adam = Adam::new(&store, 0.1, 1.0).expect("adam");
    adam.step(&mut store, &[Some(vec![0.5]), None]).expect("step");
    assert_ne!(store.get(ParamId(0)).data[0], 1.0);
    assert_eq!(store.get(ParamId(1)).data[0], 2.0);
}

#[test]
fn adam_state_round_trip_resumes_identically() {
    let grads = [
        vec![0.4, -0.2],
        vec![-0.1, 0.3],
        vec![0.05, 0.05],
    ];
    // Continuous run.
    let mut store_a = single_param_store(vec![1.0, -1.0]);
    let mut adam_a = Adam::new(&store_a, 0.07, 10.0).expect("adam");
    for g in &grads {
        adam_a.step(&mut store_a, &[Some(g.clone())]).expect("step");
    }
    // Interrupted after the first step, resumed through AdamState JSON.
    let mut store_b = single_param_store(vec![1.0, -1.0]);
    let mut adam_b = Adam::new(&store_b, 0.07, 10.0).expect("adam");
    adam_b
        .step(&mut store_b, &[Some(grads[0].clone())])
        .expect("step");
    let json = serde_json::to_string(&adam_b.state()).expect("state json");
    let state: AdamState = serde_json::from_str(&json).expect("state parse");
    let mut adam_c = Adam::from_state(state, 0.07, 10.0).expect("resume");
    for g in &grads[1..] {
        adam_c.step(&mut store_b, &[Some(g.clone())]).expect("step");
    }
    assert_eq!(
        store_a.get(ParamId(0)).data,
        store_b.get(ParamId(0)).data,
        "resumed run must match the continuous one bit for bit"
    );
}

#[test]
fn adam_rejects_bad_construction() {
    let store = single_param_store(vec![0.0]);
    assert!(matches!(Adam::new(&store, -0.1, 1.0), Err(Error::Config(_))));
    assert!(matches!(Adam::new(&store, 0.1, 0.0), Err(Error::Config(_))));
    let state = AdamState {
        t: 1,
        m: vec![vec![0.0]],
        v: vec![],
    };
    assert!(matches!(
        Adam::from_state(state, 0.1, 1.0),
        Err(Error::BadCheckpoint(_))
    ));
    // Gradient count must match the registered parameter count.
    let mut store = single_param_store(vec![0.0]);
    let mut adam = Adam::new(&store, 0.1, 1.0).expect("adam");
    assert!(matches!(
        adam.step(&mut store, &[Some(vec![0.0]), Some(vec![0.0])]),
        Err(Error::Config(_))
    ));
}

// ───────────────────────── synthetic corpora ─────────────────────────

#[test]
fn synth_spec_parses_and_validates() {
    let spec = SynthSpec::parse("kind = knowledge\nn = 60\nseed = 3\nwindow = 16").expect("spec");
    assert_eq!(spec.kind, SynthKind::Knowledge);
    assert_eq!(spec.n, 60);
    assert_eq!(spec.seed, 3);
    assert_eq!(spec.window, 16);

    let defaults = SynthSpec::parse("").expect("defaults");
    assert_eq!(defaults.kind, SynthKind::Content);
    assert_eq!(defaults.n, 400);
    assert_eq!(defaults.seed, 7);
    assert_eq!(defaults.window, 24);

    assert!(SynthSpec::parse("kind = mystery").is_err());
    assert!(SynthSpec::parse("count = 7").is_err());
    assert!(SynthSpec::parse("n = 1").is_err());
    assert!(SynthSpec::parse("window = 4").is_err());
}

#[test]
fn synth_corpora_are_deterministic_and_balanced() {
    for kind in [SynthKind::Content, SynthKind::Knowledge] {
        let spec = SynthSpec {
            kind,
            n: 50,
            seed: 11,
            window: 24,
        };
        let a = spec.generate().expect("corpus");
        let b = spec.generate().expect("corpus");
        assert_eq!(a, b, "same spec, same corpus");

        let ones = a.iter().filter(|i| i.label == 1).count();
        assert_eq!(ones, 25, "alternating labels stay balanced");
        let ids: HashSet<&str> = a.iter().map(|i| i.id.as_str()).collect();
        assert_eq!(ids.len(), a.len(), "ids are unique");

        let c = SynthSpec { seed: 12, ..spec }.generate().expect("corpus");
        assert_ne!(a, c, "a different seed changes the text");
    }
}

const CONTENT_MARKERS: [[&str; 4]; 2] = [
    ["okara", "obona", "omira", "otova"],
    ["akara", "abona", "amira", "atova"],
];
const KNOWLEDGE_MARKERS: [[&str; 3]; 2] = [
    ["vupra", "velta", "vorin"],
    ["zupra", "zelta", "zorin"],
];

#[test]
fn knowledge_docs_keep_markers_strictly_beyond_the_window() {
    let window = 24;
    let corpus = knowledge_corpus(80, 3);
    for inst in &corpus {
        let tokens = tokenize(&inst.text);
        assert_eq!(tokens.len(), window + 9, "window plus evidence tail");
        let own: &[&str] = &KNOWLEDGE_MARKERS[inst.label as usize];
        let other: &[&str] = &KNOWLEDGE_MARKERS[1 - inst.label as usize];
        for tok in &tokens[..window] {
            assert!(
                !own.contains(&tok.as_str()) && !other.contains(&tok.as_str()),
                "window token {tok:?} is a class marker in {}",
                inst.id
            );
        }
        let tail = &tokens[window..];
        for marker in own {
            let count = tail.iter().filter(|t| t.as_str() == *marker).count();
            assert_eq!(count, 3, "{marker} appears 3 times in {}", inst.id);
        }
        assert!(
            tail.iter().all(|t| own.contains(&t.as_str())),
            "tail of {} holds only own-class markers",
            inst.id
        );
    }
}

#[test]
fn content_docs_carry_their_markers_inside_the_window() {
    let window = 24;
    let corpus = content_corpus(80, 3);
    for inst in &corpus {
        let tokens = tokenize(&inst.text);
        let own: &[&str] = &CONTENT_MARKERS[inst.label as usize];
        let other: &[&str] = &CONTENT_MARKERS[1 - inst.label as usize];

        // Inside the window: 2–3 own-class markers and nothing foreign.
        let head = &tokens[..window];
        let own_count = head.iter().filter(|t| own.contains(&t.as_str())).count();
        assert!(
            (2..=3).contains(&own_count),
            "{} carries {own_count} markers",
            inst.id
        );
        assert!(
            !head.iter().any(|t| other.contains(&t.as_str())),
            "{} leaks other-class markers into the window",
            inst.id
        );

        // The tail mirrors each window marker with its counterpart, so the
        // whole-text bag of words is label-symmetric.
        let tail = &tokens[window..];
        assert_eq!(tail.len(), own_count, "one counterweight per marker");
        assert!(
            tail.iter().all(|t| other.contains(&t.as_str())),
            "tail of {} holds only other-class counterparts",
            inst.id
        );
        for pair in 0..CONTENT_MARKERS[0].len() {
            let own_uses = head
                .iter()
                .filter(|t| t.as_str() == own[pair])
                .count();
            let mirror_uses = tail
                .iter()
                .filter(|t| t.as_str() == other[pair])
                .count();
            assert_eq!(
                own_uses, mirror_uses,
                "{} balances marker pair {pair}",
                inst.id
            );
        }

        let knowledge: Vec<&str> = KNOWLEDGE_MARKERS.iter().flatten().copied().collect();
        assert!(
            !tokens.iter().any(|t| knowledge.contains(&t.as_str())),
            "{} holds knowledge markers",
            inst.id
        );
    }
}

#[test]
fn marker_pairs_are_surface_identical_across_classes() {
    // Class-0 and class-1 markers pair up with the same length and the same
    // part-of-speech tag, so none of the surface features can separate the
    // classes.
    for pair in 0..4 {
        let a = CONTENT_MARKERS[0][pair];
        let b = CONTENT_MARKERS[1][pair];
        assert_eq!(a.len(), b.len());
        assert_eq!(pos_tag(a), pos_tag(b));
    }
    for pair in 0..3 {
        let a = KNOWLEDGE_MARKERS[0][pair];
        let b = KNOWLEDGE_MARKERS[1][pair];
        assert_eq!(a.len(), b.len());
        assert_eq!(pos_tag(a), pos_tag(b));
    }
}

// ───────────────────────── training ─────────────────────────

#[test]
fn training_learns_a_separable_content_corpus() {
    let data = content_corpus(40, 7);
    let outcome = train(&tiny_config(), &data).expect("train");
    assert!(outcome.diverged_at.is_none());

    // The corpus is linearly separable from in-window markers: validation
    // accuracy must reach 1.0 within the epoch budget.
    let perfect = outcome
        .history
        .iter()
        .find(|e| e.val_accuracy == 1.0)
        .unwrap_or_else(|| panic!("never hit val accuracy 1.0: {:?}", outcome.history));
    assert!(perfect.epoch <= 30);

    // Optimization must make steady progress early on: each of the first
    // five epochs may not worsen the loss by more than 5%.
    assert!(outcome.history.len() >= 5);
    for pair in outcome.history.windows(2).take(4) {
        assert!(
            pair[1].train_loss <= pair[0].train_loss * 1.05,
            "loss jumped: {} -> {}",
            pair[0].train_loss,
            pair[1].train_loss
        );
    }

    // Early-stopping bookkeeping: the kept epoch is the first maximum.
    let best = outcome.checkpoint.best_val_macro_f1;
    let max = outcome
        .history
        .iter()
        .map(|e| e.val_macro_f1)
        .fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(best, max);
    assert_eq!(outcome.checkpoint.epoch, outcome.best_epoch);
    assert!(outcome.history[outcome.best_epoch - 1].improved);
}

#[test]
fn zero_learning_rate_stops_after_exactly_patience_extra_epochs() {
    let data = content_corpus(20, 5);
    let cfg = RunConfig {
        learning_rate: 0.0,
        max_epochs: 50,
        patience: 3,
        dropout: 0.3,
        d: 8,
        heads: 2,
        layers: 1,
        d_s: 16,
        k_neighbors: 3,
        l_max: 24,
        batch_size: 8,
        fusion_mode: FusionMode::EntropyGate,
        ..RunConfig::default()
    };
    let outcome = train(&cfg, &data).expect("train");
    // Epoch 1 establishes the baseline; with frozen weights no later epoch
    // can strictly improve, so the run ends after 1 + patience epochs.
    assert_eq!(outcome.history.len(), 1 + cfg.patience);
    assert!(outcome.stopped_early);
    assert_eq!(outcome.best_epoch, 1);
    let f1s: HashSet<u64> = outcome
        .history
        .iter()
        .map(|e| e.val_macro_f1.to_bits())
        .collect();
    assert_eq!(f1s.len(), 1, "frozen model scores identically every epoch");
}

#[test]
fn same_seed_reproduces_the_run_bit_for_bit() {
    let data = content_corpus(24, 9);
    let cfg = RunConfig {
        max_epochs: 4,
        patience: 4,
        dropout: 0.2,
        d: 8,
        heads: 2,
        layers: 1,
        d_s: 16,
        k_neighbors: 3,
        l_max: 24,
        batch_size: 8,
        learning_rate: 0.01,
        ..RunConfig::default()
    };
    let a = train(&cfg, &data).expect("train a");
    let b = train(&cfg, &data).expect("train b");
    assert_eq!(a.history.len(), b.history.len());
    for (ea, eb) in a.history.iter().zip(&b.history) {
        assert_eq!(ea.train_loss.to_bits(), eb.train_loss.to_bits());
        assert_eq!(ea.val_macro_f1.to_bits(), eb.val_macro_f1.to_bits());
        assert_eq!(ea.val_sym_kl.to_bits(), eb.val_sym_kl.to_bits());
    }
    let store_a = serde_json::to_string(&a.checkpoint.store).expect("json");
    let store_b = serde_json::to_string(&b.checkpoint.store).expect("json");
    assert_eq!(store_a, store_b, "final parameters are bit-identical");

    let c = train(
        &RunConfig {
            seed: cfg.seed + 1,
            ..cfg
        },
        &data,
    )
    .expect("train c");
    let store_c = serde_json::to_string(&c.checkpoint.store).expect("json");
    assert_ne!(store_a, store_c, "a different seed trains differently");
}

#[test]
fn divergence_keeps_the_last_finite_state() {
    let data = content_corpus(20, 5);
    let cfg = RunConfig {
        learning_rate: 1e308,
        max_epochs: 3,
        patience: 3,
        d: 8,
        heads: 2,
        layers: 1,
        d_s: 16,
        k_neighbors: 3,
        l_max: 24,
        batch_size: 8,
        dropout: 0.0,
        ..RunConfig::default()
    };
    let outcome = train(&cfg, &data).expect("train should not error on divergence");
    assert!(outcome.diverged_at.is_some(), "an absurd step size must diverge");
    let store = &outcome.checkpoint.store;
    for i in 0..store.len() {
        assert!(
            store.get(ParamId(i)).is_finite(),
            "checkpoint parameter {i} is not finite"
        );
    }
    // The rescued checkpoint must still score.
    let eval = evaluate(&outcome.checkpoint, &data[..6], &outcome.bank).expect("evaluate");
    assert_eq!(eval.traces.len(), 6);
}

// ───────────────────────── checkpoints & evaluation ─────────────────────────

fn trained_small() -> (Vec<Instance>, TrainOutcome) {
    let data = content_corpus(24, 13);
    let cfg = RunConfig {
        max_epochs: 3,
        patience: 3,
        d: 8,
        heads: 2,
        layers: 1,
        d_s: 16,
        k_neighbors: 3,
        l_max: 24,
        batch_size: 8,
        learning_rate: 0.01,
        dropout: 0.0,
        fusion_mode: FusionMode::EntropyGate,
        lambda_agree: 0.1,
        ..RunConfig::default()
    };
    let outcome = train(&cfg, &data).expect("train");
    (data, outcome)
}

#[test]
fn checkpoint_reload_scores_bit_identically() {
    let (data, outcome) = trained_small();
    let dir = tempfile::tempdir().expect("tempdir");
    let path = dir.path().join("model.ckpt");
    outcome.checkpoint.save(&path).expect("save");
    let loaded = Checkpoint::load(&path).expect("load");

    let before = evaluate(&outcome.checkpoint, &data[..8], &outcome.bank).expect("eval");
    let after = evaluate(&loaded, &data[..8], &outcome.bank).expect("eval");
    let json_before = serde_json::to_string(&before.traces).expect("json");
    let json_after = serde_json::to_string(&after.traces).expect("json");
    assert_eq!(json_before, json_after, "reload must not change a single bit");

    // RNG state survives the round trip too.
    assert_eq!(
        serde_json::to_string(&outcome.checkpoint.rng).unwrap(),
        serde_json::to_string(&loaded.rng).unwrap()
    );
}

#[test]
fn checkpoint_rejects_foreign_versions_and_garbage() {
    let (_, outcome) = trained_small();
    let dir = tempfile::tempdir().expect("tempdir");
    let path = dir.path().join("model.ckpt");
    outcome.checkpoint.save(&path).expect("save");

    let text = std::fs::read_to_string(&path).expect("read");
    let bumped = text.replacen("\"version\":1", "\"version\":99", 1);
    assert_ne!(text, bumped, "version field must be present to rewrite");
    std::fs::write(&path, bumped).expect("write");
    assert!(matches!(
        Checkpoint::load(&path),
        Err(Error::BadCheckpoint(_))
    ));

    std::fs::write(&path, "not a checkpoint").expect("write");
    assert!(matches!(
        Checkpoint::load(&path),
        Err(Error::BadCheckpoint(_))
    ));
}

#[test]
fn evaluation_is_pure_and_validates_its_inputs() {
    let (data, outcome) = trained_small();
    let a = evaluate(&outcome.checkpoint, &data[..8], &outcome.bank).expect("eval");
    let b = evaluate(&outcome.checkpoint, &data[..8], &outcome.bank).expect("eval");
    assert_eq!(
        serde_json::to_string(&a.traces).unwrap(),
        serde_json::to_string(&b.traces).unwrap()
    );
    assert_eq!(
        serde_json::to_string(&a.report).unwrap(),
        serde_json::to_string(&b.report).unwrap()
    );
    for trace in &a.traces {
        let sum: f64 = trace.yf.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }
    assert!(a.report.seed.is_some() && a.report.config_digest.is_some());

    assert!(matches!(
        evaluate(&outcome.checkpoint, &[], &outcome.bank),
        Err(Error::EmptyMetrics)
    ));

    // A bank from a different embedding space must be refused.
    let provider = HashedBowProvider::new(outcome.checkpoint.bank_dim, 999);
    let foreign = MemoryBank::build(&provider, &data).expect("bank");
    assert!(matches!(
        evaluate(&outcome.checkpoint, &data[..8], &foreign),
        Err(Error::FingerprintMismatch { .. })
    ));
}

#[test]
fn saved_traces_rescore_to_the_same_report() {
    let (data, outcome) = trained_small();
    let out = evaluate(&outcome.checkpoint, &data, &outcome.bank).expect("eval");
    // A reader holding only the trace file must be able to rebuild the
    // exact report.
    let records = vox_records(&out.traces).expect("records");
    let mut rebuilt = routing_report(&records, &out.traces).expect("report");
    rebuilt.seed = out.report.seed;
    rebuilt.config_digest = out.report.config_digest.clone();
    assert_eq!(
        serde_json::to_string(&rebuilt).unwrap(),
        serde_json::to_string(&out.report).unwrap()
    );
}

#[test]
fn leakage_guards_hold_vocabulary_and_bank_to_the_train_split() {
    // Give every document a unique marker token; with min_frequency 1 any
    // train-split marker enters the vocabulary, so a validation or test
    // marker resolving to UNK proves the vocabulary never saw those splits.
    let mut data = content_corpus(20, 5);
    for (i, inst) in data.iter_mut().enumerate() {
        inst.text.push_str(&format!(" uniq{i:02}"));
    }
    let cfg = RunConfig {
        max_epochs: 2,
        patience: 2,
        min_frequency: 1,
        d: 8,
        heads: 2,
        layers: 1,
        d_s: 16,
        k_neighbors: 3,
        l_max: 24,
        batch_size: 8,
        learning_rate: 0.01,
        dropout: 0.0,
        ..RunConfig::default()
    };
    let outcome = train(&cfg, &data).expect("train");
    leakage_audit(&outcome, &data).expect("bank must only hold train rows");

    let split = stratified_split(&data, cfg.split, cfg.seed).expect("split");
    let vocab = &outcome.checkpoint.vocab;
    let marker = |inst: &Instance| tokenize(&inst.text).last().unwrap().clone();
    for inst in split.val.iter().chain(&split.test) {
        assert_eq!(
            vocab.id(&marker(inst)),
            UNK_ID,
            "token unique to {} leaked into the vocabulary",
            inst.id
        );
    }
    for inst in &split.train {
        assert_ne!(
            vocab.id(&marker(inst)),
            UNK_ID,
            "train-split token of {} should be in the vocabulary",
            inst.id
        );
    }
}

// ───────────────────────── attention diagnostics ─────────────────────────

#[test]
fn attention_report_shapes_and_means_line_up() {
    let (data, outcome) = trained_small();
    let report = attention_report(&outcome.checkpoint, &data, 3, false).expect("report");
    assert_eq!(report.n_documents, 3);
    assert_eq!(report.documents.len(), 3);
    let cfg = &outcome.checkpoint.config;
    assert_eq!(report.mean_entropy.len(), cfg.layers);
    assert_eq!(report.mean_entropy[0].len(), cfg.heads);
    for doc in &report.documents {
        assert_eq!(doc.entropy.len(), cfg.layers);
        assert_eq!(doc.entropy[0].len(), cfg.heads);
        assert!(doc.alpha.is_none());
        for layer in &doc.pos_mass {
            for head in layer {
                let sum: f64 = head.iter().sum();
                assert!((sum - 1.0).abs() < 1e-9, "pos mass must sum to 1, got {sum}");
            }
        }
    }
    // The summary is the plain mean of the per-document entropies.
    for layer in 0..cfg.layers {
        for head in 0..cfg.heads {
            let mean: f64 = report
                .documents
                .iter()
                .map(|d| d.entropy[layer][head])
                .sum::<f64>()
                / report.documents.len() as f64;
            assert!((report.mean_entropy[layer][head] - mean).abs() < 1e-12);
        }
    }
    let json = serde_json::to_string(&report).expect("json");
    assert!(!json.contains("\"alpha\""), "alpha omitted unless requested");

    let with_alpha = attention_report(&outcome.checkpoint, &data, 1, true).expect("report");
    let doc = &with_alpha.documents[0];
    let alpha = doc.alpha.as_ref().expect("alpha requested");
    assert_eq!(alpha.len(), cfg.layers);
    assert_eq!(alpha[0].len(), cfg.heads);
    let l = tokenize(&data[0].text).len().min(cfg.l_max);
    assert_eq!(alpha[0][0].len(), l * l, "row-major l×l attention matrix");

    assert!(matches!(
        attention_report(&outcome.checkpoint, &[], 3, false),
        Err(Error::EmptyMetrics)
    ));
}
