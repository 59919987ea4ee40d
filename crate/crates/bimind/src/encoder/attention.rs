//! POS-conditioned offset networks, geometry-adapted multi-head attention,
//! and attention traces with their diagnostics.

use crate::encoder::{EncoderParams, LayerParams, TEMPERATURE_FLOOR};
use crate::error::Result;
use crate::tensor::{ParamStore, Tape, TensorId};
use crate::text::{PosCategory, D_POS};

/// Recorded attention state for one head: pre-softmax logits and
/// post-softmax weights, both L×L row-major (query rows, key columns).
#[derive(Debug, Clone)]
pub struct HeadTrace {
    pub l: usize,
    pub logits: Vec<f64>,
    pub alpha: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LayerTrace {
    pub heads: Vec<HeadTrace>,
}

/// Attention weights across the whole stack plus the position mask they
/// were computed under.
#[derive(Debug, Clone)]
pub struct AttentionTrace {
    pub layers: Vec<LayerTrace>,
    pub mask: Vec<bool>,
}

/// Run one layer's offset networks over the POS one-hots.
///
/// Returns (Δq, Δk), each L×H: row i holds the per-head logit offsets for
/// token i. Both are pure functions of the token's POS class, so documents
/// produce at most five distinct rows.
pub fn offset_vectors(
    tape: &mut Tape,
    store: &ParamStore,
    layer: &LayerParams,
    pos: &[PosCategory],
) -> Result<(TensorId, TensorId)> {
    let mut one_hots = Vec::with_capacity(pos.len() * D_POS);
    for &p in pos {
        one_hots.extend_from_slice(&p.one_hot());
    }
    let p = tape.constant(&crate::tensor::Tensor::new(
        vec![pos.len(), D_POS],
        one_hots,
    )?);

    let mut run = |w1, b1, w2, b2| -> Result<TensorId> {
        let w1 = tape.param(store, w1);
        let b1 = tape.param(store, b1);
        let w2 = tape.param(store, w2);
        let b2 = tape.param(store, b2);
        let h = tape.matmul(p, w1)?;
        let h = tape.add_row(h, b1)?;
        let h = tape.relu(h)?;
        let out = tape.matmul(h, w2)?;
        tape.add_row(out, b2)
    };
    let dq = run(layer.fq_w1, layer.fq_b1, layer.fq_w2, layer.fq_b2)?;
    let dk = run(layer.fk_w1, layer.fk_b1, layer.fk_w2, layer.fk_b2)?;
    Ok((dq, dk))
}

/// Geometry-adapted multi-head attention for one layer.
///
/// Per head h: logits = qᵀk/√d_k, shifted by Δq (a constant per query row —
/// cancels under softmax) and Δk (a constant per key column — does not
/// cancel, and is what actually reshapes the attention geometry), divided
/// by τ_h = softplus(t_h) + 0.1, masked, softmaxed, applied to values, and
/// the concatenated head outputs projected by the output matrix.
///
/// With `aga` false the offsets and temperature are bypassed entirely,
/// yielding standard scaled dot-product attention.
#[allow(clippy::too_many_arguments)]
pub fn aga_attention(
    tape: &mut Tape,
    store: &ParamStore,
    enc: &EncoderParams,
    layer: &LayerParams,
    x: TensorId,
    offsets: Option<(TensorId, TensorId)>,
    mask: &[bool],
    trace: Option<&mut LayerTrace>,
) -> Result<TensorId> {
    let l = tape.shape(x)[0];
    let d_k = enc.head_dim();
    let wq = tape.param(store, layer.wq);
    let wk = tape.param(store, layer.wk);
    let wv = tape.param(store, layer.wv);
    let wo = tape.param(store, layer.wo);
    let q = tape.matmul(x, wq)?;
    let k = tape.matmul(x, wk)?;
    let v = tape.matmul(x, wv)?;

    // Effective inverse temperature per head, only when adapting.
    let inv_tau = match offsets {
        Some(_) => {
            let t = tape.param(store, layer.temp);
            let sp = tape.softplus(t)?;
            let tau = tape.affine(sp, 1.0, TEMPERATURE_FLOOR)?;
            Some(tape.recip(tau)?)
        }
        None => None,
    };

    let mut head_outputs = Vec::with_capacity(enc.n_heads);
    let mut head_traces = Vec::new();
    for h in 0..enc.n_heads {
        let q_h = tape.slice_last(q, h * d_k, d_k)?;
        let k_h = tape.slice_last(k, h * d_k, d_k)?;
        let v_h = tape.slice_last(v, h * d_k, d_k)?;
        let k_t = tape.transpose(k_h)?;
        let dots = tape.matmul(q_h, k_t)?;
        let mut logits = tape.affine(dots, 1.0 / (d_k as f64).sqrt(), 0.0)?;
        if let Some((dq, dk)) = offsets {
            let dq_col = tape.slice_last(dq, h, 1)?;
            let dq_col = tape.reshape(dq_col, vec![l])?;
            logits = tape.add_col(logits, dq_col)?;
            let dk_col = tape.slice_last(dk, h, 1)?;
            let dk_row = tape.reshape(dk_col, vec![l])?;
            logits = tape.add_row(logits, dk_row)?;
            let inv_h = tape.slice_last(inv_tau.expect("set when adapting"), h, 1)?;
            logits = tape.mul_scalar_t(logits, inv_h)?;
        }
        let alpha = tape.softmax_rows(logits, Some(mask))?;
        if trace.is_some() {
            head_traces.push(HeadTrace {
                l,
                logits: tape.data(logits).to_vec(),
                alpha: tape.data(alpha).to_vec(),
            });
        }
        head_outputs.push(tape.matmul(alpha, v_h)?);
    }
    if let Some(t) = trace {
        t.heads = head_traces;
    }
    let concat = tape.concat_last(&head_outputs)?;
    tape.matmul(concat, wo)
}

/// Mean attention entropy per layer and head: for each unmasked query row,
/// −Σ_j α_{ij} ln α_{ij} (masked keys hold exactly zero weight and
/// contribute nothing), averaged over rows.
pub fn attention_entropy(trace: &AttentionTrace) -> Vec<Vec<f64>> {
    trace
        .layers
        .iter()
        .map(|layer| {
            layer
                .heads
                .iter()
                .map(|head| {
                    let l = head.l;
                    let mut total = 0.0;
                    let mut rows = 0usize;
                    for i in 0..l {
                        if !trace.mask[i] {
                            continue;
                        }
                        rows += 1;
                        total += head.alpha[i * l..(i + 1) * l]
                            .iter()
                            .filter(|&&a| a > 0.0)
                            .map(|&a| -a * a.ln())
                            .sum::<f64>();
                    }
                    if rows == 0 {
                        0.0
                    } else {
                        total / rows as f64
                    }
                })
                .collect()
        })
        .collect()
}

/// Head-specialization summary: per layer and head, the mean attention mass
/// landing on each POS category, averaged over unmasked query rows. Each
/// head's five masses sum to 1 (every key belongs to exactly one category).
pub fn pos_attention_mass(trace: &AttentionTrace, pos: &[PosCategory]) -> Vec<Vec<[f64; D_POS]>> {
    trace
        .layers
        .iter()
        .map(|layer| {
            layer
                .heads
                .iter()
                .map(|head| {
                    let l = head.l;
                    debug_assert_eq!(pos.len(), l, "one POS tag per position");
                    let mut mass = [0.0; D_POS];
                    let mut rows = 0usize;
                    for i in 0..l {
                        if !trace.mask[i] {
                            continue;
                        }
                        rows += 1;
                        for j in 0..l {
                            mass[pos[j].index()] += head.alpha[i * l + j];
                        }
                    }
                    if rows > 0 {
                        mass.iter_mut().for_each(|m| *m /= rows as f64);
                    }
                    mass
                })
                .collect()
        })
        .collect()
}
