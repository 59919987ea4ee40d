//! Training objective: weighted cross-entropy on the fused and per-head
//! logits plus a symmetric-KL agreement penalty.

use super::forward::{InstanceOutput, LOG_FLOOR};
use super::N_CLASSES;
use crate::error::{Error, Result};
use crate::tensor::{Tape, TensorId};

/// Inverse-frequency class weights, normalized to mean one. Requires at
/// least one instance of every class.
pub fn class_weights(labels: &[usize]) -> Result<[f64; N_CLASSES]> {
    let mut counts = [0usize; N_CLASSES];
    for &y in labels {
        if y >= N_CLASSES {
            return Err(Error::BadLabel { got: y as i64 });
        }
        counts[y] += 1;
    }
    if counts.iter().any(|&c| c == 0) {
        return Err(Error::Config(
            "class weights need at least one instance of every class".into(),
        ));
    }
    let inv: Vec<f64> = counts.iter().map(|&c| 1.0 / c as f64).collect();
    let total: f64 = inv.iter().sum();
    let scale = N_CLASSES as f64 / total;
    let mut w = [0.0; N_CLASSES];
    for (wi, inv_i) in w.iter_mut().zip(&inv) {
        *wi = inv_i * scale;
    }
    Ok(w)
}

/// Symmetrized KL divergence `½[KL(p‖q) + KL(q‖p)]` between two
/// probability vectors, with logs floored for numerical safety.
pub fn sym_kl(tape: &mut Tape, p: TensorId, q: TensorId) -> Result<TensorId> {
    let lp = tape.log_clamped(p, LOG_FLOOR)?;
    let lq = tape.log_clamped(q, LOG_FLOOR)?;
    let diff = tape.sub(lp, lq)?;
    let forward = tape.mul(p, diff)?;
    let forward = tape.sum_all(forward)?;
    let neg_diff = tape.affine(diff, -1.0, 0.0)?;
    let reverse = tape.mul(q, neg_diff)?;
    let reverse = tape.sum_all(reverse)?;
    let total = tape.add(forward, reverse)?;
    tape.affine(total, 0.5, 0.0)
}

/// Weighted cross-entropy of one logit vector against a gold label.
fn weighted_ce(tape: &mut Tape, z: TensorId, label: usize, weight: f64) -> Result<TensorId> {
    let lse = tape.logsumexp(z)?;
    let zy = tape.slice_last(z, label, 1)?;
    let ce = tape.sub(lse, zy)?;
    tape.affine(ce, weight, 0.0)
}

/// Mean per-instance objective over a batch:
/// `CE(z_F) + ½ CE(z_0) + ½ CE(z_E) + λ · agreement`, each CE weighted by
/// the gold label's class weight.
pub fn total_loss(
    tape: &mut Tape,
    outputs: &[InstanceOutput],
    labels: &[usize],
    weights: &[f64; N_CLASSES],
    lambda: f64,
) -> Result<TensorId> {
    if outputs.is_empty() {
        return Err(Error::Config("loss over an empty batch".into()));
    }
    if outputs.len() != labels.len() {
        return Err(Error::Config(format!(
            "{} outputs but {} labels",
            outputs.len(),
            labels.len()
        )));
    }
    let mut acc: Option<TensorId> = None;
    for (out, &y) in outputs.iter().zip(labels) {
        if y >= N_CLASSES {
            return Err(Error::BadLabel { got: y as i64 });
        }
        let w = weights[y];
        let fused = weighted_ce(tape, out.zf, y, w)?;
        let content = weighted_ce(tape, out.z0, y, 0.5 * w)?;
        let knowledge = weighted_ce(tape, out.ze, y, 0.5 * w)?;
        let mut term = tape.add(fused, content)?;
        term = tape.add(term, knowledge)?;
        if lambda != 0.0 {
            let agree = sym_kl(tape, out.y0, out.ye)?;
            let agree = tape.affine(agree, lambda, 0.0)?;
            term = tape.add(term, agree)?;
        }
        acc = Some(match acc {
            Some(a) => tape.add(a, term)?,
            None => term,
        });
    }
    let sum = acc.expect("non-empty batch");
    tape.affine(sum, 1.0 / outputs.len() as f64, 0.0)
}
