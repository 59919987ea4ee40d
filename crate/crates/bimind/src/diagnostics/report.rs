//! Routing report: side-by-side scores for the content head, the knowledge
//! head, and their fusion, with gain and gate aggregates.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::metrics::macro_metrics;
use super::vox::{EvalTrace, VoxCategory, VoxRecord};
use super::argmax;
use crate::error::{Error, Result};

/// Gate mass below this value counts as routed to the knowledge head.
pub const GATE_LOW_THRESHOLD: f64 = 0.3;
/// Gate mass above this value counts as routed to the content head.
pub const GATE_HIGH_THRESHOLD: f64 = 0.7;

/// One scorer's metrics as percentages in [0, 100].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HeadScores {
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
}

/// Gate aggregates (only present when the traces carry gate values).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GateStats {
    pub mean: f64,
    /// Percent of instances with gate below the low threshold.
    pub below_pct: f64,
    /// Percent of instances with gate above the high threshold.
    pub above_pct: f64,
    pub low_threshold: f64,
    pub high_threshold: f64,
}

/// Full evaluation summary for one trace set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoutingReport {
    pub n_instances: usize,
    pub head0: HeadScores,
    pub head_e: HeadScores,
    pub fused: HeadScores,
    /// Mean true-class logit gain. Measured on raw logits, not
    /// probabilities.
    pub vox_mean: f64,
    /// Percent of instances with strictly positive gain.
    pub vox_pos_pct: f64,
    pub helps_pct: f64,
    pub hurts_pct: f64,
    pub neutral_pct: f64,
    pub gate: Option<GateStats>,
    /// Percent of instances evaluated without any retrieved memory.
    pub knowledge_absent_pct: f64,
    /// Unit note so downstream readers do not misread the gain scale.
    pub vox_units: String,
    /// Training seed, when the caller knows it.
    pub seed: Option<u64>,
    /// Identifier of the configuration that produced the traces.
    pub config_digest: Option<String>,
}

fn to_scores(predictions: &[usize], labels: &[usize]) -> Result<HeadScores> {
    let m = macro_metrics(predictions, labels)?;
    Ok(HeadScores {
        accuracy: 100.0 * m.accuracy,
        macro_precision: 100.0 * m.macro_precision,
        macro_recall: 100.0 * m.macro_recall,
        macro_f1: 100.0 * m.macro_f1,
    })
}

/// Build the routing report with the standard gate thresholds.
pub fn routing_report(records: &[VoxRecord], traces: &[EvalTrace]) -> Result<RoutingReport> {
    routing_report_with_thresholds(records, traces, GATE_LOW_THRESHOLD, GATE_HIGH_THRESHOLD)
}

/// Build the routing report with caller-chosen gate thresholds.
pub fn routing_report_with_thresholds(
    records: &[VoxRecord],
    traces: &[EvalTrace],
    gate_low: f64,
    gate_high: f64,
) -> Result<RoutingReport> {
    if records.is_empty() || traces.is_empty() {
        return Err(Error::EmptyMetrics);
    }
    if records.len() != traces.len() {
        return Err(Error::Config(format!(
            "{} records but {} traces",
            records.len(),
            traces.len()
        )));
    }
    let labels: Vec<usize> = traces.iter().map(|t| t.label).collect();
    let pred0: Vec<usize> = traces.iter().map(|t| argmax(&t.z0)).collect();
    let pred_e: Vec<usize> = traces.iter().map(|t| argmax(&t.ze)).collect();
    let pred_f: Vec<usize> = traces.iter().map(|t| argmax(&t.zf)).collect();

    let n = records.len() as f64;
    let vox_mean = records.iter().map(|r| r.vox).sum::<f64>() / n;
    let pct = |count: usize| 100.0 * count as f64 / n;
    let vox_pos_pct = pct(records.iter().filter(|r| r.vox > 0.0).count());
    let helps_pct = pct(records
        .iter()
        .filter(|r| r.category == VoxCategory::Helps)
        .count());
    let hurts_pct = pct(records
        .iter()
        .filter(|r| r.category == VoxCategory::Hurts)
        .count());
    let neutral_pct = pct(records
        .iter()
        .filter(|r| r.category == VoxCategory::Neutral)
        .count());

    let gates: Vec<f64> = records.iter().filter_map(|r| r.gate).collect();
    let gate = if gates.is_empty() {
        None
    } else {
        let gn = gates.len() as f64;
        Some(GateStats {
            mean: gates.iter().sum::<f64>() / gn,
            below_pct: 100.0 * gates.iter().filter(|&&g| g < gate_low).count() as f64 / gn,
            above_pct: 100.0 * gates.iter().filter(|&&g| g > gate_high).count() as f64 / gn,
            low_threshold: gate_low,
            high_threshold: gate_high,
        })
    };
    let knowledge_absent_pct = pct(traces.iter().filter(|t| t.knowledge_absent).count());

    Ok(RoutingReport {
        n_instances: records.len(),
        head0: to_scores(&pred0, &labels)?,
        head_e: to_scores(&pred_e, &labels)?,
        fused: to_scores(&pred_f, &labels)?,
        vox_mean,
        vox_pos_pct,
        helps_pct,
        hurts_pct,
        neutral_pct,
        gate,
        knowledge_absent_pct,
        vox_units: "raw logits (true-class logit difference)".to_string(),
        seed: None,
        config_digest: None,
    })
}

/// Render the report as an aligned text table.
pub fn text_table(report: &RoutingReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<10} {:>8} {:>8} {:>8} {:>8}",
        "scorer", "Acc", "Pre", "Rec", "F1"
    );
    for (name, scores) in [
        ("Head_0", &report.head0),
        ("Head_E", &report.head_e),
        ("Fused", &report.fused),
    ] {
        let _ = writeln!(
            out,
            "{:<10} {:>8.2} {:>8.2} {:>8.2} {:>8.2}",
            name, scores.accuracy, scores.macro_precision, scores.macro_recall, scores.macro_f1
        );
    }
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "vox mean {:+.4} ({})   pos% {:.2}   helps/hurts/neutral {:.2}/{:.2}/{:.2}",
        report.vox_mean,
        report.vox_units,
        report.vox_pos_pct,
        report.helps_pct,
        report.hurts_pct,
        report.neutral_pct
    );
    match &report.gate {
        Some(g) => {
            let _ = writeln!(
                out,
                "gate mean {:.2} ({:.2}% / {:.2}%)   thresholds <{:.2} / >{:.2}",
                g.mean, g.below_pct, g.above_pct, g.low_threshold, g.high_threshold
            );
        }
        None => {
            let _ = writeln!(out, "gate: not used by this fusion mode");
        }
    }
    if report.knowledge_absent_pct > 0.0 {
        let _ = writeln!(
            out,
            "instances without retrieved memory: {:.2}%",
            report.knowledge_absent_pct
        );
    }
    out
}
