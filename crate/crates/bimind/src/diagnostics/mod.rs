//! Post-hoc analysis of model outputs: the knowledge-gain score per
//! instance, macro classification metrics, and routing reports comparing
//! the content head, the knowledge head, and their fusion.

mod metrics;
mod report;
mod vox;

pub use metrics::{macro_metrics, Metrics};
pub use report::{
    routing_report, routing_report_with_thresholds, text_table, GateStats, HeadScores,
    RoutingReport, GATE_HIGH_THRESHOLD, GATE_LOW_THRESHOLD,
};
pub use vox::{
    categorize, vox, vox_records, EvalTrace, VoxCategory, VoxRecord, VOX_EPSILON,
};

/// Index of the largest value; ties go to the lowest index.
///
/// # Panics
/// Panics on an empty slice.
pub fn argmax(values: &[f64]) -> usize {
    assert!(!values.is_empty(), "argmax of an empty slice");
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
