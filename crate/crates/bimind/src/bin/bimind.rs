//! Command-line interface: corpus generation, memory-bank construction,
//! training, evaluation, and diagnostic reports.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};

use bimind::diagnostics::{routing_report, text_table, vox_records, EvalTrace, VoxCategory};
use bimind::memory::{HashedBowProvider, MemoryBank};
use bimind::pipeline::{
    attention_report, evaluate, train, Checkpoint, RunConfig, SynthSpec, TrainOutcome,
};
use bimind::text::load_jsonl;
use bimind::Error;

#[derive(Parser)]
#[command(
    name = "bimind",
    about = "Dual-head misinformation classifier with self-retrieval memory",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Ablation {
    /// Run plain attention without geometry adaptation.
    Aga,
    /// Feed the knowledge head a zero memory summary.
    Retrieval,
    /// Replace entropy-gated fusion with plain averaging.
    GatedFusion,
    /// Replace the agreement head with plain averaging.
    AgreementHead,
    /// Drop the agreement regularizer from the loss.
    Kl,
}

#[derive(Subcommand)]
enum Command {
    /// Build a semantic memory bank from a JSONL dataset.
    MemoryBuild {
        /// Dataset (one JSON object per line: id, text, label).
        data: PathBuf,
        /// Output bank file.
        out: PathBuf,
        /// Embedding dimension.
        #[arg(long, default_value_t = 256)]
        dim: usize,
        /// Embedding hash seed.
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Train a model and write a checkpoint plus its memory bank.
    Train {
        /// Run configuration (`key = value` lines).
        config: PathBuf,
        /// Dataset to split and train on.
        data: PathBuf,
        /// Checkpoint output path; the bank lands next to it as `<ckpt>.bank`.
        ckpt: PathBuf,
        /// Disable a component (repeatable).
        #[arg(long, value_enum)]
        disable: Vec<Ablation>,
        /// Override the configured seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a checkpoint and write report.json, report.txt, traces.jsonl.
    Eval {
        ckpt: PathBuf,
        data: PathBuf,
        report_dir: PathBuf,
        /// Memory bank path (defaults to `<ckpt>.bank`).
        #[arg(long)]
        bank: Option<PathBuf>,
    },
    /// Rebuild the routing report from a trace file.
    VoxReport {
        /// Trace file (one JSON trace per line, as written by eval).
        traces: PathBuf,
        /// Report output (JSON).
        out: PathBuf,
        /// Also write per-instance gains as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Report attention entropy and POS attention mass per layer and head.
    DiagnoseAttention {
        ckpt: PathBuf,
        data: PathBuf,
        /// Report output (JSON).
        out: PathBuf,
        /// Number of documents to analyze.
        #[arg(long, default_value_t = 16)]
        limit: usize,
        /// Include the full attention matrices.
        #[arg(long)]
        dump_alpha: bool,
    },
    /// Generate a synthetic corpus from a spec file.
    SynthGen {
        /// Spec (`key = value` lines: kind, n, seed, window).
        spec: PathBuf,
        /// Output dataset (JSONL).
        out: PathBuf,
    },
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::MemoryBuild {
            data,
            out,
            dim,
            seed,
        } => memory_build(&data, &out, dim, seed),
        Command::Train {
            config,
            data,
            ckpt,
            disable,
            seed,
        } => train_cmd(&config, &data, &ckpt, &disable, seed),
        Command::Eval {
            ckpt,
            data,
            report_dir,
            bank,
        } => eval_cmd(&ckpt, &data, &report_dir, bank.as_deref()),
        Command::VoxReport { traces, out, csv } => vox_report_cmd(&traces, &out, csv.as_deref()),
        Command::DiagnoseAttention {
            ckpt,
            data,
            out,
            limit,
            dump_alpha,
        } => diagnose_cmd(&ckpt, &data, &out, limit, dump_alpha),
        Command::SynthGen { spec, out } => synth_gen(&spec, &out),
    }
}

/// Default bank location: the checkpoint path with `.bank` appended.
fn bank_path_for(ckpt: &Path) -> PathBuf {
    let mut s = ckpt.as_os_str().to_owned();
    s.push(".bank");
    PathBuf::from(s)
}

fn memory_build(data: &Path, out: &Path, dim: usize, seed: u64) -> anyhow::Result<()> {
    let instances = load_jsonl(data).with_context(|| format!("loading {}", data.display()))?;
    let provider = HashedBowProvider::new(dim, seed);
    let bank = MemoryBank::build(&provider, &instances)?;
    bank.save(out)
        .with_context(|| format!("writing {}", out.display()))?;
    println!(
        "built memory bank: {} entries, dim {}, seed {} -> {}",
        bank.len(),
        bank.dim(),
        bank.seed(),
        out.display()
    );
    Ok(())
}

fn apply_ablations(config: &mut RunConfig, disable: &[Ablation]) {
    for flag in disable {
        match flag {
            Ablation::Aga => config.disable_aga = true,
            Ablation::Retrieval => config.disable_retrieval = true,
            Ablation::GatedFusion => config.disable_gated_fusion = true,
            Ablation::AgreementHead => config.disable_agreement_head = true,
            Ablation::Kl => config.disable_kl = true,
        }
    }
}

fn train_cmd(
    config_path: &Path,
    data: &Path,
    ckpt_path: &Path,
    disable: &[Ablation],
    seed: Option<u64>,
) -> anyhow::Result<()> {
    let mut config = RunConfig::from_file(config_path)
        .with_context(|| format!("loading {}", config_path.display()))?;
    apply_ablations(&mut config, disable);
    if let Some(seed) = seed {
        config.seed = seed;
    }
    let instances = load_jsonl(data).with_context(|| format!("loading {}", data.display()))?;

    let outcome = train(&config, &instances)?;
    save_training_artifacts(&outcome, ckpt_path)?;

    if let Some(epoch) = outcome.diverged_at {
        // The last finite state is on disk; the run itself still failed.
        return Err(Error::Diverged { epoch }.into());
    }
    println!(
        "trained {} epochs; kept epoch {} (val macro-F1 {:.4}){}",
        outcome.history.len(),
        outcome.best_epoch,
        outcome.checkpoint.best_val_macro_f1,
        if outcome.stopped_early {
            "; stopped early"
        } else {
            ""
        }
    );
    println!(
        "checkpoint -> {}  bank -> {}",
        ckpt_path.display(),
        bank_path_for(ckpt_path).display()
    );
    Ok(())
}

fn save_training_artifacts(outcome: &TrainOutcome, ckpt_path: &Path) -> anyhow::Result<()> {
    outcome
        .checkpoint
        .save(ckpt_path)
        .with_context(|| format!("writing {}", ckpt_path.display()))?;
    let bank_path = bank_path_for(ckpt_path);
    outcome
        .bank
        .save(&bank_path)
        .with_context(|| format!("writing {}", bank_path.display()))?;
    Ok(())
}

fn eval_cmd(
    ckpt_path: &Path,
    data: &Path,
    report_dir: &Path,
    bank: Option<&Path>,
) -> anyhow::Result<()> {
    let ckpt =
        Checkpoint::load(ckpt_path).with_context(|| format!("loading {}", ckpt_path.display()))?;
    let default_bank = bank_path_for(ckpt_path);
    let bank_path = bank.unwrap_or(&default_bank);
    let bank =
        MemoryBank::load(bank_path).with_context(|| format!("loading {}", bank_path.display()))?;
    let instances = load_jsonl(data).with_context(|| format!("loading {}", data.display()))?;

    let out = evaluate(&ckpt, &instances, &bank)?;

    fs::create_dir_all(report_dir)
        .with_context(|| format!("creating {}", report_dir.display()))?;
    let report_json = serde_json::to_string_pretty(&out.report)?;
    fs::write(report_dir.join("report.json"), report_json + "\n")?;
    let table = text_table(&out.report);
    fs::write(report_dir.join("report.txt"), &table)?;
    let mut traces = String::new();
    for trace in &out.traces {
        traces.push_str(&serde_json::to_string(trace)?);
        traces.push('\n');
    }
    fs::write(report_dir.join("traces.jsonl"), traces)?;

    print!("{table}");
    println!("reports -> {}", report_dir.display());
    Ok(())
}

fn load_traces(path: &Path) -> anyhow::Result<Vec<EvalTrace>> {
    let text = fs::read_to_string(path).with_context(|| format!("loading {}", path.display()))?;
    let mut traces = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let trace: EvalTrace = serde_json::from_str(line).map_err(|e| Error::BadRecord {
            line: idx + 1,
            msg: e.to_string(),
        })?;
        traces.push(trace);
    }
    Ok(traces)
}

fn vox_report_cmd(traces_path: &Path, out: &Path, csv: Option<&Path>) -> anyhow::Result<()> {
    let traces = load_traces(traces_path)?;
    let records = vox_records(&traces)?;
    let report = routing_report(&records, &traces)?;

    let json = serde_json::to_string_pretty(&report)?;
    fs::write(out, json + "\n").with_context(|| format!("writing {}", out.display()))?;

    if let Some(csv_path) = csv {
        let mut body = String::from("id,label,vox,gate,category\n");
        for r in &records {
            let gate = r.gate.map_or(String::new(), |g| format!("{g}"));
            let category = match r.category {
                VoxCategory::Helps => "helps",
                VoxCategory::Hurts => "hurts",
                VoxCategory::Neutral => "neutral",
            };
            let _ = writeln!(body, "{},{},{},{},{}", r.id, r.label, r.vox, gate, category);
        }
        fs::write(csv_path, body).with_context(|| format!("writing {}", csv_path.display()))?;
    }

    print!("{}", text_table(&report));
    Ok(())
}

fn diagnose_cmd(
    ckpt_path: &Path,
    data: &Path,
    out: &Path,
    limit: usize,
    dump_alpha: bool,
) -> anyhow::Result<()> {
    let ckpt =
        Checkpoint::load(ckpt_path).with_context(|| format!("loading {}", ckpt_path.display()))?;
    let instances = load_jsonl(data).with_context(|| format!("loading {}", data.display()))?;
    let report = attention_report(&ckpt, &instances, limit, dump_alpha)?;
    let json = serde_json::to_string_pretty(&report)?;
    fs::write(out, json + "\n").with_context(|| format!("writing {}", out.display()))?;

    println!(
        "attention over {} documents (entropy per layer/head):",
        report.n_documents
    );
    for (l, heads) in report.mean_entropy.iter().enumerate() {
        let cells: Vec<String> = heads.iter().map(|h| format!("{h:.3}")).collect();
        println!("  layer {l}: {}", cells.join("  "));
    }
    Ok(())
}

fn synth_gen(spec_path: &Path, out: &Path) -> anyhow::Result<()> {
    let spec = SynthSpec::from_file(spec_path)
        .with_context(|| format!("loading {}", spec_path.display()))?;
    let corpus = spec.generate()?;
    let mut body = String::new();
    for inst in &corpus {
        body.push_str(&serde_json::to_string(inst)?);
        body.push('\n');
    }
    fs::write(out, body).with_context(|| format!("writing {}", out.display()))?;
    println!("wrote {} documents -> {}", corpus.len(), out.display());
    Ok(())
}
