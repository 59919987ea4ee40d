//! Per-instance knowledge gain: the true-class logit difference between
//! the knowledge head and the content head, measured on raw logits.

use serde::{Deserialize, Serialize};

use super::argmax;
use crate::error::{Error, Result};
use crate::model::N_CLASSES;

/// Gains smaller than this magnitude count as neutral.
pub const VOX_EPSILON: f64 = 1e-6;

/// Direction of the knowledge head's effect on the true class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoxCategory {
    Helps,
    Hurts,
    Neutral,
}

/// One instance's knowledge-gain diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VoxRecord {
    pub id: String,
    pub label: usize,
    /// True-class logit difference, knowledge head minus content head.
    pub vox: f64,
    /// Mixing weight on the content head, when the fusion mode has one.
    pub gate: Option<f64>,
    pub correct_head0: bool,
    pub correct_head_e: bool,
    pub category: VoxCategory,
}

/// Everything the report pipeline needs about one evaluated instance,
/// in plain serializable form (one JSON object per line in trace files).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalTrace {
    pub id: String,
    pub label: usize,
    pub z0: Vec<f64>,
    pub ze: Vec<f64>,
    pub zf: Vec<f64>,
    pub yf: Vec<f64>,
    pub gate: Option<f64>,
    pub entropy0: f64,
    pub entropy_e: f64,
    /// True when retrieval found nothing and the memory summary was zero.
    #[serde(default)]
    pub knowledge_absent: bool,
}

/// True-class logit gain of the knowledge head over the content head.
pub fn vox(z0: &[f64], ze: &[f64], label: usize) -> Result<f64> {
    if z0.len() != ze.len() {
        return Err(Error::ShapeMismatch {
            op: "vox",
            lhs: vec![z0.len()],
            rhs: vec![ze.len()],
        });
    }
    if label >= z0.len() {
        return Err(Error::BadLabel { got: label as i64 });
    }
    Ok(ze[label] - z0[label])
}

/// Classify a gain value against the neutrality band.
pub fn categorize(value: f64) -> VoxCategory {
    if value > VOX_EPSILON {
        VoxCategory::Helps
    } else if value < -VOX_EPSILON {
        VoxCategory::Hurts
    } else {
        VoxCategory::Neutral
    }
}

/// Build per-instance records from evaluation traces.
pub fn vox_records(traces: &[EvalTrace]) -> Result<Vec<VoxRecord>> {
    traces
        .iter()
        .map(|t| {
            if t.label >= N_CLASSES {
                return Err(Error::BadLabel {
                    got: t.label as i64,
                });
            }
            let value = vox(&t.z0, &t.ze, t.label)?;
            Ok(VoxRecord {
                id: t.id.clone(),
                label: t.label,
                vox: value,
                gate: t.gate,
                correct_head0: argmax(&t.z0) == t.label,
                correct_head_e: argmax(&t.ze) == t.label,
                category: categorize(value),
            })
        })
        .collect()
}
