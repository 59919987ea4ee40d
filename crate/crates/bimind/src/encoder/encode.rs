//! The full encoder stack: positional encoding, adapted attention layers
//! with residual/norm/feed-forward, and masked max pooling.

use crate::encoder::attention::{aga_attention, offset_vectors, AttentionTrace, LayerTrace};
use crate::encoder::EncoderParams;
use crate::error::Result;
use crate::tensor::{ParamStore, Tape, Tensor, TensorId};
use crate::text::PosCategory;

/// Classic sinusoidal positional encodings for a length-l window.
pub fn sinusoidal_positional(l: usize, d: usize) -> Tensor {
    let mut data = Vec::with_capacity(l * d);
    for pos in 0..l {
        for j in 0..d {
            let pair = (j / 2) as f64;
            let rate = (pos as f64) / 10_000f64.powf(2.0 * pair / d as f64);
            data.push(if j % 2 == 0 { rate.sin() } else { rate.cos() });
        }
    }
    Tensor {
        shape: vec![l, d],
        data,
        grad: None,
    }
}

/// Output of [`encode`]: the per-token sequence, the pooled document
/// vector, and (when requested) the attention trace.
pub struct Encoded {
    pub seq: TensorId,
    pub pooled: TensorId,
    pub trace: Option<AttentionTrace>,
}

/// Run the encoder stack over embedded tokens.
///
/// `x` is the L×d embedding matrix; positional encodings are added here.
/// Each layer applies adapted attention (standard attention when `aga` is
/// false), then residual + layer norm, a ReLU feed-forward with inner
/// width 4d, and a second residual + layer norm. The document vector is
/// the columnwise max over unmasked positions.
pub fn encode(
    tape: &mut Tape,
    store: &ParamStore,
    enc: &EncoderParams,
    x: TensorId,
    pos: &[PosCategory],
    mask: &[bool],
    aga: bool,
    record_trace: bool,
) -> Result<Encoded> {
    let l = tape.shape(x)[0];
    let pe = tape.constant(&sinusoidal_positional(l, enc.d));
    let mut h = tape.add(x, pe)?;

    let mut layer_traces = Vec::new();
    for layer in &enc.layers {
        let offsets = if aga {
            Some(offset_vectors(tape, store, layer, pos)?)
        } else {
            None
        };
        let mut trace_slot = record_trace.then(|| LayerTrace { heads: Vec::new() });
        let attn = aga_attention(
            tape,
            store,
            enc,
            layer,
            h,
            offsets,
            mask,
            trace_slot.as_mut(),
        )?;
        if let Some(t) = trace_slot {
            layer_traces.push(t);
        }
        let res1 = tape.add(h, attn)?;
        let g1 = tape.param(store, layer.ln1_gamma);
        let b1 = tape.param(store, layer.ln1_beta);
        let n1 = tape.layer_norm_rows(res1, g1, b1, 1e-5)?;

        let fw1 = tape.param(store, layer.ff_w1);
        let fb1 = tape.param(store, layer.ff_b1);
        let fw2 = tape.param(store, layer.ff_w2);
        let fb2 = tape.param(store, layer.ff_b2);
        let ff = tape.matmul(n1, fw1)?;
        let ff = tape.add_row(ff, fb1)?;
        let ff = tape.relu(ff)?;
        let ff = tape.matmul(ff, fw2)?;
        let ff = tape.add_row(ff, fb2)?;
        let res2 = tape.add(n1, ff)?;
        let g2 = tape.param(store, layer.ln2_gamma);
        let b2 = tape.param(store, layer.ln2_beta);
        h = tape.layer_norm_rows(res2, g2, b2, 1e-5)?;
    }

    let pooled = tape.masked_max_cols(h, mask)?;
    Ok(Encoded {
        seq: h,
        pooled,
        trace: (!layer_traces.is_empty()).then_some(AttentionTrace {
            layers: layer_traces,
            mask: mask.to_vec(),
        }),
    })
}
