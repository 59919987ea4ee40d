//! Per-instance forward pass: encode, inject retrieved knowledge through
//! FiLM, score with both heads, and fuse.

use rand::Rng;

use super::{FilmParams, FusionMode, HeadParams, ModelParams};
use crate::encoder::{encode, AttentionTrace};
use crate::error::{Error, Result};
use crate::tensor::{ParamId, ParamStore, Tape, TensorId};
use crate::text::TokenizedDoc;

/// Numeric floor inside `p ln p` terms so zero probabilities contribute zero.
pub(crate) const LOG_FLOOR: f64 = 1e-9;

/// Knobs for a single forward pass. Dropout fires only when an RNG is
/// supplied alongside a positive rate.
#[derive(Debug, Clone, Copy)]
pub struct ForwardOptions {
    pub mode: FusionMode,
    /// Apply the attention-geometry adapter (false = plain attention).
    pub use_aga: bool,
    /// Dropout rate on the head input vectors.
    pub dropout: f64,
    /// Capture per-head attention distributions for diagnostics.
    pub record_attention: bool,
}

impl Default for ForwardOptions {
    fn default() -> Self {
        ForwardOptions {
            mode: FusionMode::EntropyGate,
            use_aga: true,
            dropout: 0.0,
            record_attention: false,
        }
    }
}

/// Plain-value snapshot of one forward pass, for metrics and reports.
#[derive(Debug, Clone)]
pub struct InstanceTrace {
    pub h: Vec<f64>,
    pub h_e: Vec<f64>,
    pub z0: Vec<f64>,
    pub ze: Vec<f64>,
    pub zf: Vec<f64>,
    pub y0: Vec<f64>,
    pub ye: Vec<f64>,
    pub yf: Vec<f64>,
    pub entropy0: f64,
    pub entropy_e: f64,
    /// Mixing weight on the content head: learned in gated fusion, the
    /// constant one half under averaging, absent otherwise.
    pub gate: Option<f64>,
    /// Agreement-head logits when that fusion mode is active.
    pub za: Option<Vec<f64>>,
    pub attention: Option<AttentionTrace>,
}

/// Tape handles from one forward pass, for building the training objective.
#[derive(Debug, Clone)]
pub struct InstanceOutput {
    pub h: TensorId,
    pub h_e: TensorId,
    pub z0: TensorId,
    pub ze: TensorId,
    pub zf: TensorId,
    pub y0: TensorId,
    pub ye: TensorId,
    pub yf: TensorId,
    pub trace: InstanceTrace,
}

/// `v · W + b` for a 1-d input vector; returns a 1-d output.
fn row_linear(
    tape: &mut Tape,
    store: &ParamStore,
    v: TensorId,
    w: ParamId,
    b: ParamId,
) -> Result<TensorId> {
    let n = tape.shape(v)[0];
    let w_id = tape.param(store, w);
    let b_id = tape.param(store, b);
    let m = tape.shape(w_id)[1];
    let row = tape.reshape(v, vec![1, n])?;
    let y = tape.matmul(row, w_id)?;
    let y = tape.add_row(y, b_id)?;
    tape.reshape(y, vec![m])
}

/// Feature-wise modulation of the pooled representation by the retrieved
/// memory summary: `h ⊙ (1 + tanh(γ)) + β` with γ, β affine in the summary.
/// With zero projection parameters this is the identity.
pub fn film(
    tape: &mut Tape,
    store: &ParamStore,
    p: &FilmParams,
    h: TensorId,
    m: TensorId,
) -> Result<TensorId> {
    let gamma = row_linear(tape, store, m, p.w_gamma, p.b_gamma)?;
    let beta = row_linear(tape, store, m, p.w_beta, p.b_beta)?;
    let t = tape.tanh(gamma)?;
    let scale = tape.affine(t, 1.0, 1.0)?;
    let scaled = tape.mul(h, scale)?;
    tape.add(scaled, beta)
}

/// Content-head and knowledge-head logits from their (already assembled)
/// input vectors.
pub fn heads(
    tape: &mut Tape,
    store: &ParamStore,
    p: &HeadParams,
    input0: TensorId,
    input_e: TensorId,
) -> Result<(TensorId, TensorId)> {
    let z0 = row_linear(tape, store, input0, p.w0, p.b0)?;
    let ze = row_linear(tape, store, input_e, p.we, p.be)?;
    Ok((z0, ze))
}

/// Shannon entropy of a probability vector, with `0 ln 0 = 0`.
pub fn entropy(tape: &mut Tape, p: TensorId) -> Result<TensorId> {
    if let Some(&bad) = tape.data(p).iter().find(|v| **v < 0.0) {
        return Err(Error::NegativeProbability { value: bad });
    }
    let lp = tape.log_clamped(p, LOG_FLOOR)?;
    let plogp = tape.mul(p, lp)?;
    let s = tape.sum_all(plogp)?;
    tape.affine(s, -1.0, 0.0)
}

/// Confidence-based mixing weight: a sigmoid over both representations and
/// both head entropies.
pub fn entropy_gate(
    tape: &mut Tape,
    store: &ParamStore,
    p: &HeadParams,
    h: TensorId,
    h_e: TensorId,
    entropy0: TensorId,
    entropy_e: TensorId,
) -> Result<TensorId> {
    let u = tape.concat_last(&[h, h_e, entropy0, entropy_e])?;
    let z = row_linear(tape, store, u, p.gate_w, p.gate_b)?;
    tape.sigmoid(z)
}

/// Interaction features for the agreement head:
/// `[h; h_E; h ⊙ h_E; |h − h_E|]`.
pub fn agreement_features(tape: &mut Tape, h: TensorId, h_e: TensorId) -> Result<TensorId> {
    let prod = tape.mul(h, h_e)?;
    let diff = tape.sub(h, h_e)?;
    let dist = tape.abs(diff)?;
    tape.concat_last(&[h, h_e, prod, dist])
}

fn agreement_logits(
    tape: &mut Tape,
    store: &ParamStore,
    p: &HeadParams,
    h: TensorId,
    h_e: TensorId,
) -> Result<TensorId> {
    let phi = agreement_features(tape, h, h_e)?;
    let hidden = row_linear(tape, store, phi, p.agree_w1, p.agree_b1)?;
    let hidden = tape.relu(hidden)?;
    row_linear(tape, store, hidden, p.agree_w2, p.agree_b2)
}

/// Combine the two heads' logits into the final logits for the requested
/// fusion mode. `gate` is required for gated fusion and `za` for the
/// agreement head; both are ignored otherwise.
pub fn fuse(
    tape: &mut Tape,
    mode: FusionMode,
    z0: TensorId,
    ze: TensorId,
    gate: Option<TensorId>,
    za: Option<TensorId>,
) -> Result<TensorId> {
    match mode {
        FusionMode::EntropyGate => {
            let g = gate.ok_or_else(|| {
                Error::Config("gated fusion requires a gate value".into())
            })?;
            let keep = tape.mul_scalar_t(z0, g)?;
            let one_minus = tape.affine(g, -1.0, 1.0)?;
            let other = tape.mul_scalar_t(ze, one_minus)?;
            tape.add(keep, other)
        }
        FusionMode::Average => {
            let s = tape.add(z0, ze)?;
            tape.affine(s, 0.5, 0.0)
        }
        FusionMode::ProductOfExperts => tape.add(z0, ze),
        FusionMode::AgreementHead => za.ok_or_else(|| {
            Error::Config("agreement fusion requires agreement logits".into())
        }),
    }
}

/// Run the full model on one tokenized document with a fixed retrieved
/// memory summary. Pass `rng: None` (or a zero rate) to disable dropout.
pub fn forward<R: Rng>(
    tape: &mut Tape,
    store: &ParamStore,
    params: &ModelParams,
    doc: &TokenizedDoc,
    memory_summary: &[f64],
    opts: &ForwardOptions,
    rng: Option<&mut R>,
) -> Result<InstanceOutput> {
    if memory_summary.len() != params.d_s {
        return Err(Error::ShapeMismatch {
            op: "forward",
            lhs: vec![memory_summary.len()],
            rhs: vec![params.d_s],
        });
    }
    if params.d_c != 0 && params.d_c != doc.features.len() {
        return Err(Error::Config(format!(
            "model expects {} content features, document has {}",
            params.d_c,
            doc.features.len()
        )));
    }

    let embed = tape.param(store, params.embed);
    let x = tape.gather_rows(embed, &doc.token_ids)?;
    let enc = encode(
        tape,
        store,
        &params.encoder,
        x,
        &doc.pos,
        &doc.mask,
        opts.use_aga,
        opts.record_attention,
    )?;
    let h = enc.pooled;

    let m = tape.constant_vec(memory_summary.to_vec());
    let h_e = film(tape, store, &params.film, h, m)?;

    let (mut input0, mut input_e) = if params.d_c == 0 {
        (h, h_e)
    } else {
        let c = tape.constant_vec(doc.features.clone());
        (tape.concat_last(&[h, c])?, tape.concat_last(&[h_e, c])?)
    };
    if opts.dropout > 0.0 {
        if let Some(r) = rng {
            input0 = tape.dropout(input0, opts.dropout, &mut *r)?;
            input_e = tape.dropout(input_e, opts.dropout, &mut *r)?;
        }
    }

    let (z0, ze) = heads(tape, store, &params.head, input0, input_e)?;
    let y0 = tape.softmax_rows(z0, None)?;
    let ye = tape.softmax_rows(ze, None)?;
    let entropy0 = entropy(tape, y0)?;
    let entropy_e = entropy(tape, ye)?;

    let gate = match opts.mode {
        FusionMode::EntropyGate => Some(entropy_gate(
            tape, store, &params.head, h, h_e, entropy0, entropy_e,
        )?),
        _ => None,
    };
    let za = match opts.mode {
        FusionMode::AgreementHead => {
            Some(agreement_logits(tape, store, &params.head, h, h_e)?)
        }
        _ => None,
    };
    let zf = fuse(tape, opts.mode, z0, ze, gate, za)?;
    let yf = tape.softmax_rows(zf, None)?;

    let trace = InstanceTrace {
        h: tape.data(h).to_vec(),
        h_e: tape.data(h_e).to_vec(),
        z0: tape.data(z0).to_vec(),
        ze: tape.data(ze).to_vec(),
        zf: tape.data(zf).to_vec(),
        y0: tape.data(y0).to_vec(),
        ye: tape.data(ye).to_vec(),
        yf: tape.data(yf).to_vec(),
        entropy0: tape.scalar_value(entropy0),
        entropy_e: tape.scalar_value(entropy_e),
        gate: match opts.mode {
            FusionMode::EntropyGate => gate.map(|g| tape.scalar_value(g)),
            FusionMode::Average => Some(0.5),
            _ => None,
        },
        za: za.map(|id| tape.data(id).to_vec()),
        attention: enc.trace,
    };

    Ok(InstanceOutput {
        h,
        h_e,
        z0,
        ze,
        zf,
        y0,
        ye,
        yf,
        trace,
    })
}
