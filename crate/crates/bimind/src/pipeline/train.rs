//! The training loop and evaluation: leakage-safe preparation, batched
//! optimization with early stopping, and trace-producing scoring.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::{Checkpoint, CHECKPOINT_VERSION};
use super::config::RunConfig;
use super::optimizer::{Adam, AdamState};
use super::split::stratified_split;
use crate::diagnostics::{routing_report, vox_records, EvalTrace, RoutingReport, VoxRecord};
use crate::error::{Error, Result};
use crate::memory::{aggregate, EmbeddingProvider, HashedBowProvider, MemoryBank};
use crate::model::{class_weights, forward, total_loss, ForwardOptions, ModelParams};
use crate::tensor::{ParamStore, Tape};
use crate::text::{prepare, Instance, TokenizedDoc};

/// Summary of one training epoch.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean per-instance training loss.
    pub train_loss: f64,
    pub val_accuracy: f64,
    pub val_macro_f1: f64,
    /// Mean symmetric KL between the two heads on the validation set.
    pub val_sym_kl: f64,
    pub improved: bool,
}

/// Result of a training run. When training diverges the checkpoint holds
/// the last state that was still finite.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub bank: MemoryBank,
    pub history: Vec<EpochStats>,
    pub best_epoch: usize,
    pub stopped_early: bool,
    pub diverged_at: Option<usize>,
}

/// Scored evaluation of a document set.
#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub traces: Vec<EvalTrace>,
    pub records: Vec<VoxRecord>,
    pub report: RoutingReport,
    /// Mean symmetric KL between the two heads' distributions.
    pub mean_sym_kl: f64,
}

fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const STREAM_INIT: u64 = 1;
const STREAM_TRAIN: u64 = 2;

/// Retrieve and aggregate the memory summary for one document. Retrieval
/// always excludes the document's own id so an instance never testifies
/// for itself. An exhausted bank degrades to "no knowledge" instead of
/// failing the run.
fn memory_summary(
    bank: &MemoryBank,
    provider: &HashedBowProvider,
    id: &str,
    text: &str,
    k: usize,
    disabled: bool,
) -> Result<(Vec<f64>, bool)> {
    if disabled {
        return Ok((vec![0.0; bank.dim()], true));
    }
    match bank.retrieve(provider, text, k, Some(id)) {
        Ok(hits) => {
            let agg = aggregate(bank, &hits.indices);
            Ok((agg.vector, agg.knowledge_absent))
        }
        Err(Error::EmptyDataset(_)) => Ok((vec![0.0; bank.dim()], true)),
        Err(e) => Err(e),
    }
}

fn softmax_vec(z: &[f64]) -> Vec<f64> {
    let mx = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| (v - mx).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|v| v / sum).collect()
}

fn sym_kl_vec(p: &[f64], q: &[f64]) -> f64 {
    const FLOOR: f64 = 1e-9;
    let mut forward = 0.0;
    let mut reverse = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        let la = a.max(FLOOR).ln();
        let lb = b.max(FLOOR).ln();
        forward += a * (la - lb);
        reverse += b * (lb - la);
    }
    0.5 * (forward + reverse)
}

/// Evaluate prepared documents with dropout off, producing traces, gain
/// records, and the routing report.
pub(crate) fn eval_prepared(
    store: &ParamStore,
    model: &ModelParams,
    config: &RunConfig,
    docs: &[TokenizedDoc],
    bank: &MemoryBank,
    provider: &HashedBowProvider,
) -> Result<EvalOutcome> {
    if docs.is_empty() {
        return Err(Error::EmptyMetrics);
    }
    let opts = ForwardOptions {
        mode: config.effective_mode(),
        use_aga: !config.disable_aga,
        dropout: 0.0,
        record_attention: false,
    };
    let mut traces = Vec::with_capacity(docs.len());
    let mut kl_sum = 0.0;
    for doc in docs {
        let (summary, absent) = memory_summary(
            bank,
            provider,
            &doc.id,
            &doc.text,
            config.k_neighbors,
            config.disable_retrieval,
        )?;
        let mut tape = Tape::new();
        let out = forward::<ChaCha8Rng>(
            &mut tape, store, model, doc, &summary, &opts, None,
        )?;
        let t = out.trace;
        kl_sum += sym_kl_vec(&softmax_vec(&t.z0), &softmax_vec(&t.ze));
        traces.push(EvalTrace {
            id: doc.id.clone(),
            label: doc.label,
            z0: t.z0,
            ze: t.ze,
            zf: t.zf,
            yf: t.yf,
            gate: t.gate,
            entropy0: t.entropy0,
            entropy_e: t.entropy_e,
            knowledge_absent: absent,
        });
    }
    let records = vox_records(&traces)?;
    let mut report = routing_report(&records, &traces)?;
    report.seed = Some(config.seed);
    report.config_digest = Some(config.digest());
    let mean_sym_kl = kl_sum / docs.len() as f64;
    Ok(EvalOutcome {
        traces,
        records,
        report,
        mean_sym_kl,
    })
}

/// Evaluate raw instances against a checkpoint and its memory bank.
pub fn evaluate(
    ckpt: &Checkpoint,
    instances: &[Instance],
    bank: &MemoryBank,
) -> Result<EvalOutcome> {
    ckpt.check_bank(bank)?;
    if instances.is_empty() {
        return Err(Error::EmptyMetrics);
    }
    let provider = HashedBowProvider::new(ckpt.bank_dim, ckpt.bank_seed);
    let docs: Vec<TokenizedDoc> = instances
        .iter()
        .map(|i| prepare(i, &ckpt.vocab, ckpt.config.l_max))
        .collect();
    eval_prepared(
        &ckpt.store,
        &ckpt.model,
        &ckpt.config,
        &docs,
        bank,
        &provider,
    )
}

struct BestState {
    store: ParamStore,
    optimizer: AdamState,
    rng: ChaCha8Rng,
    epoch: usize,
    val_macro_f1: f64,
}

/// Split, build leakage-safe artifacts from the train portion only, and
/// run the optimization loop with early stopping on validation macro-F1.
pub fn train(config: &RunConfig, data: &[Instance]) -> Result<TrainOutcome> {
    config.validate()?;
    let split = stratified_split(data, config.split, config.seed)?;

    // Everything learned ahead of training — vocabulary, class weights,
    // and the memory bank — comes from the train split alone.
    let train_tokens: Vec<Vec<String>> = split
        .train
        .iter()
        .map(|i| crate::text::tokenize(&i.text))
        .collect();
    let vocab = crate::text::Vocabulary::build(
        train_tokens.iter().map(|t| t.as_slice()),
        config.min_frequency,
    );
    let provider = HashedBowProvider::new(config.d_s, config.seed);
    let bank = MemoryBank::build(&provider, &split.train)?;
    let train_labels: Vec<usize> = split.train.iter().map(|i| i.label as usize).collect();
    let weights = class_weights(&train_labels)?;

    let train_docs: Vec<TokenizedDoc> = split
        .train
        .iter()
        .map(|i| prepare(i, &vocab, config.l_max))
        .collect();
    let val_docs: Vec<TokenizedDoc> = split
        .val
        .iter()
        .map(|i| prepare(i, &vocab, config.l_max))
        .collect();

    // The bank and queries are fixed, so each document's memory summary
    // can be computed once up front.
    let summaries: Vec<(Vec<f64>, bool)> = train_docs
        .iter()
        .map(|d| {
            memory_summary(
                &bank,
                &provider,
                &d.id,
                &d.text,
                config.k_neighbors,
                config.disable_retrieval,
            )
        })
        .collect::<Result<_>>()?;

    let mut store = ParamStore::new();
    let mut init_rng = seeded_rng(config.seed, STREAM_INIT);
    let model = ModelParams::init(
        &mut store,
        vocab.len(),
        config.d,
        config.d_c,
        config.d_s,
        config.heads,
        config.layers,
        &mut init_rng,
    )?;
    let mut adam = Adam::new(&store, config.learning_rate, config.grad_clip_norm)?;
    let mut train_rng = seeded_rng(config.seed, STREAM_TRAIN);

    let opts = ForwardOptions {
        mode: config.effective_mode(),
        use_aga: !config.disable_aga,
        dropout: config.dropout,
        record_attention: false,
    };
    let lambda = config.effective_lambda();

    let mut best = BestState {
        store: store.clone(),
        optimizer: adam.state(),
        rng: train_rng.clone(),
        epoch: 0,
        val_macro_f1: -1.0,
    };
    let mut history = Vec::new();
    let mut epochs_since_best = 0usize;
    let mut stopped_early = false;
    let mut diverged_at = None;

    'epochs: for epoch in 1..=config.max_epochs {
        let mut order: Vec<usize> = (0..train_docs.len()).collect();
        order.shuffle(&mut train_rng);

        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch = (|| -> Result<f64> {
                let mut tape = Tape::new();
                tape.set_check_finite(true);
                let mut outputs = Vec::with_capacity(chunk.len());
                let mut labels = Vec::with_capacity(chunk.len());
                for &i in chunk {
                    let doc = &train_docs[i];
                    outputs.push(forward(
                        &mut tape,
                        &store,
                        &model,
                        doc,
                        &summaries[i].0,
                        &opts,
                        Some(&mut train_rng),
                    )?);
                    labels.push(doc.label);
                }
                let loss = total_loss(&mut tape, &outputs, &labels, &weights, lambda)?;
                let value = tape.scalar_value(loss);
                if !value.is_finite() {
                    return Err(Error::NonFinite { op: "loss" });
                }
                tape.backward(loss)?;
                let grads = tape.param_grads(store.len());
                let report = adam.step(&mut store, &grads)?;
                if report.skipped {
                    log::warn!("epoch {epoch}: optimizer step skipped");
                }
                Ok(value * chunk.len() as f64)
            })();
            match batch {
                Ok(weighted) => loss_sum += weighted,
                Err(Error::NonFinite { .. }) => {
                    log::error!("epoch {epoch}: loss diverged; keeping last good state");
                    diverged_at = Some(epoch);
                    break 'epochs;
                }
                Err(e) => return Err(e),
            }
        }
        let train_loss = loss_sum / train_docs.len() as f64;

        let val = eval_prepared(&store, &model, config, &val_docs, &bank, &provider)?;
        let val_macro_f1 = val.report.fused.macro_f1 / 100.0;
        let val_accuracy = val.report.fused.accuracy / 100.0;
        let improved = val_macro_f1 > best.val_macro_f1;
        if improved {
            best = BestState {
                store: store.clone(),
                optimizer: adam.state(),
                rng: train_rng.clone(),
                epoch,
                val_macro_f1,
            };
            epochs_since_best = 0;
        } else {
            epochs_since_best += 1;
        }
        history.push(EpochStats {
            epoch,
            train_loss,
            val_accuracy,
            val_macro_f1,
            val_sym_kl: val.mean_sym_kl,
            improved,
        });
        log::info!(
            "epoch {epoch}: loss {train_loss:.6} val acc {val_accuracy:.4} \
             val macro-F1 {val_macro_f1:.4}{}",
            if improved { " *" } else { "" }
        );
        if epochs_since_best >= config.patience {
            stopped_early = true;
            break;
        }
    }

    let best_epoch = best.epoch;
    let checkpoint = Checkpoint {
        version: CHECKPOINT_VERSION,
        config: config.clone(),
        vocab,
        model,
        store: best.store,
        optimizer: best.optimizer,
        epoch: best.epoch,
        best_val_macro_f1: best.val_macro_f1,
        rng: best.rng,
        bank_seed: provider.seed(),
        bank_dim: provider.dim(),
    };
    Ok(TrainOutcome {
        checkpoint,
        bank,
        history,
        best_epoch,
        stopped_early,
        diverged_at,
    })
}

/// Sanity guard used by tests: training artifacts must reference only the
/// train split.
#[doc(hidden)]
pub fn leakage_audit(outcome: &TrainOutcome, data: &[Instance]) -> Result<()> {
    let split = stratified_split(data, outcome.checkpoint.config.split, outcome.checkpoint.config.seed)?;
    let train_ids: std::collections::HashSet<&str> =
        split.train.iter().map(|i| i.id.as_str()).collect();
    if outcome.bank.len() != split.train.len() {
        return Err(Error::Config(format!(
            "bank holds {} rows for {} train instances",
            outcome.bank.len(),
            split.train.len()
        )));
    }
    for row in 0..outcome.bank.len() {
        if !train_ids.contains(outcome.bank.id(row)) {
            return Err(Error::Config(format!(
                "bank row {row} ({}) is not a train instance",
                outcome.bank.id(row)
            )));
        }
    }
    Ok(())
}
