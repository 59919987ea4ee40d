//! Transformer encoder with attention-geometry adaptation (AGA).
//!
//! Each layer is multi-head attention whose pre-softmax logits are shifted
//! by POS-conditioned per-token offsets and divided by a learnable per-head
//! temperature, followed by the classic residual + layer-norm + feed-forward
//! sandwich. The sequence output is max-pooled over unmasked positions.

mod attention;
mod encode;

pub use attention::{
    aga_attention, attention_entropy, offset_vectors, pos_attention_mass, AttentionTrace,
    HeadTrace, LayerTrace,
};
pub use encode::{encode, sinusoidal_positional, Encoded};

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{ParamId, ParamStore, Tensor};
use crate::text::D_POS;

/// Hidden width of the two-layer offset networks.
const OFFSET_HIDDEN: usize = 16;

/// Floor added to the softplus temperature so attention never sharpens
/// without bound.
pub const TEMPERATURE_FLOOR: f64 = 0.1;

/// Initial raw temperature, chosen so softplus(t) + floor = 1 and training
/// starts at standard attention sharpness.
pub fn initial_raw_temperature() -> f64 {
    ((1.0 - TEMPERATURE_FLOOR).exp() - 1.0).ln()
}

/// Parameter handles for one encoder layer.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct LayerParams {
    pub wq: ParamId,
    pub wk: ParamId,
    pub wv: ParamId,
    pub wo: ParamId,
    pub fq_w1: ParamId,
    pub fq_b1: ParamId,
    pub fq_w2: ParamId,
    pub fq_b2: ParamId,
    pub fk_w1: ParamId,
    pub fk_b1: ParamId,
    pub fk_w2: ParamId,
    pub fk_b2: ParamId,
    /// Raw per-head temperatures t; effective τ_h = softplus(t_h) + 0.1.
    pub temp: ParamId,
    pub ff_w1: ParamId,
    pub ff_b1: ParamId,
    pub ff_w2: ParamId,
    pub ff_b2: ParamId,
    pub ln1_gamma: ParamId,
    pub ln1_beta: ParamId,
    pub ln2_gamma: ParamId,
    pub ln2_beta: ParamId,
}

/// Parameter handles and dimensions for the whole encoder stack.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct EncoderParams {
    pub d: usize,
    pub n_heads: usize,
    pub layers: Vec<LayerParams>,
}

impl EncoderParams {
    /// Register freshly initialized encoder parameters.
    ///
    /// Projections and feed-forward weights get fan-in uniform init; the
    /// offset networks' output layers start at zero and temperatures start
    /// at τ ≈ 1, so an untrained encoder computes standard attention.
    pub fn init<R: Rng>(
        store: &mut ParamStore,
        d: usize,
        n_heads: usize,
        n_layers: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if d == 0 || n_heads == 0 || n_layers == 0 {
            return Err(Error::Config(
                "encoder dims and layer count must be positive".into(),
            ));
        }
        if d % n_heads != 0 {
            return Err(Error::Config(format!(
                "head count {n_heads} must divide model dim {d}"
            )));
        }
        let ff = 4 * d;
        let layers = (0..n_layers)
            .map(|l| {
                let p = |suffix: &str| format!("enc.l{l}.{suffix}");
                LayerParams {
                    wq: store.register(p("wq"), Tensor::uniform_init(vec![d, d], d, rng)),
                    wk: store.register(p("wk"), Tensor::uniform_init(vec![d, d], d, rng)),
                    wv: store.register(p("wv"), Tensor::uniform_init(vec![d, d], d, rng)),
                    wo: store.register(p("wo"), Tensor::uniform_init(vec![d, d], d, rng)),
                    fq_w1: store.register(
                        p("fq.w1"),
                        Tensor::uniform_init(vec![D_POS, OFFSET_HIDDEN], D_POS, rng),
                    ),
                    fq_b1: store.register(p("fq.b1"), Tensor::zeros(vec![OFFSET_HIDDEN])),
                    fq_w2: store.register(p("fq.w2"), Tensor::zeros(vec![OFFSET_HIDDEN, n_heads])),
                    fq_b2: store.register(p("fq.b2"), Tensor::zeros(vec![n_heads])),
                    fk_w1: store.register(
                        p("fk.w1"),
                        Tensor::uniform_init(vec![D_POS, OFFSET_HIDDEN], D_POS, rng),
                    ),
                    fk_b1: store.register(p("fk.b1"), Tensor::zeros(vec![OFFSET_HIDDEN])),
                    fk_w2: store.register(p("fk.w2"), Tensor::zeros(vec![OFFSET_HIDDEN, n_heads])),
                    fk_b2: store.register(p("fk.b2"), Tensor::zeros(vec![n_heads])),
                    temp: store.register(
                        p("temp"),
                        Tensor::from_vec(vec![initial_raw_temperature(); n_heads]),
                    ),
                    ff_w1: store.register(p("ff.w1"), Tensor::uniform_init(vec![d, ff], d, rng)),
                    ff_b1: store.register(p("ff.b1"), Tensor::zeros(vec![ff])),
                    ff_w2: store.register(p("ff.w2"), Tensor::uniform_init(vec![ff, d], ff, rng)),
                    ff_b2: store.register(p("ff.b2"), Tensor::zeros(vec![d])),
                    ln1_gamma: store.register(p("ln1.gamma"), Tensor::from_vec(vec![1.0; d])),
                    ln1_beta: store.register(p("ln1.beta"), Tensor::zeros(vec![d])),
                    ln2_gamma: store.register(p("ln2.gamma"), Tensor::from_vec(vec![1.0; d])),
                    ln2_beta: store.register(p("ln2.beta"), Tensor::zeros(vec![d])),
                }
            })
            .collect();
        Ok(EncoderParams {
            d,
            n_heads,
            layers,
        })
    }

    pub fn head_dim(&self) -> usize {
        self.d / self.n_heads
    }
}
