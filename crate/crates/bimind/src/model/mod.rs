//! The dual-head model: knowledge injection via FiLM, a content head and a
//! knowledge head, four fusion strategies, and the agreement-regularized
//! training objective.

mod forward;
mod loss;

pub use forward::{
    agreement_features, entropy, entropy_gate, film, forward, fuse, heads, ForwardOptions,
    InstanceOutput, InstanceTrace,
};
pub use loss::{class_weights, sym_kl, total_loss};

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::EncoderParams;
use crate::error::{Error, Result};
use crate::tensor::{ParamId, ParamStore, Tensor};

/// Number of output classes (binary correctness).
pub const N_CLASSES: usize = 2;

/// Hidden width of the agreement head.
const AGREE_HIDDEN: usize = 64;

/// How the two heads' logits combine into the final prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    /// Learned gate over [h; h_E; H(ŷ_0); H(ŷ_E)] mixes the logits.
    EntropyGate,
    /// A trained classifier over agreement features produces the final
    /// logits directly.
    AgreementHead,
    /// Plain logit average (the gate fixed at one half).
    Average,
    /// Product of experts: softmax of summed logits.
    ProductOfExperts,
}

impl FromStr for FusionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "entropy_gate" => Ok(FusionMode::EntropyGate),
            "agreement_head" => Ok(FusionMode::AgreementHead),
            "average" => Ok(FusionMode::Average),
            "product_of_experts" => Ok(FusionMode::ProductOfExperts),
            other => Err(Error::UnknownFusionMode(other.to_string())),
        }
    }
}

impl fmt::Display for FusionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FusionMode::EntropyGate => "entropy_gate",
            FusionMode::AgreementHead => "agreement_head",
            FusionMode::Average => "average",
            FusionMode::ProductOfExperts => "product_of_experts",
        };
        f.write_str(s)
    }
}

/// FiLM projection parameters. The projections are stored input-major
/// (d_s×d) so the forward pass is a plain row-vector matmul.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FilmParams {
    pub w_gamma: ParamId,
    pub b_gamma: ParamId,
    pub w_beta: ParamId,
    pub b_beta: ParamId,
}

/// Classifier-side parameters: the two heads, the entropy gate, and the
/// agreement head.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HeadParams {
    pub w0: ParamId,
    pub b0: ParamId,
    pub we: ParamId,
    pub be: ParamId,
    pub gate_w: ParamId,
    pub gate_b: ParamId,
    pub agree_w1: ParamId,
    pub agree_b1: ParamId,
    pub agree_w2: ParamId,
    pub agree_b2: ParamId,
}

/// All parameter handles plus the dimensions they were built for.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelParams {
    pub d: usize,
    pub d_c: usize,
    pub d_s: usize,
    pub embed: ParamId,
    pub encoder: EncoderParams,
    pub film: FilmParams,
    pub head: HeadParams,
}

impl ModelParams {
    /// Register a freshly initialized model.
    #[allow(clippy::too_many_arguments)]
    pub fn init<R: Rng>(
        store: &mut ParamStore,
        vocab_size: usize,
        d: usize,
        d_c: usize,
        d_s: usize,
        n_heads: usize,
        n_layers: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if vocab_size < 2 {
            return Err(Error::Config("vocabulary must include PAD and UNK".into()));
        }
        if d_s == 0 {
            return Err(Error::Config("memory dimension must be positive".into()));
        }
        let embed = store.register("embed", Tensor::uniform_init(vec![vocab_size, d], d, rng));
        let encoder = EncoderParams::init(store, d, n_heads, n_layers, rng)?;
        let film = FilmParams {
            w_gamma: store.register(
                "film.w_gamma",
                Tensor::uniform_init(vec![d_s, d], d_s, rng),
            ),
            b_gamma: store.register("film.b_gamma", Tensor::zeros(vec![d])),
            w_beta: store.register("film.w_beta", Tensor::uniform_init(vec![d_s, d], d_s, rng)),
            b_beta: store.register("film.b_beta", Tensor::zeros(vec![d])),
        };
        let din = d + d_c;
        let head = HeadParams {
            w0: store.register(
                "head.w0",
                Tensor::uniform_init(vec![din, N_CLASSES], din, rng),
            ),
            b0: store.register("head.b0", Tensor::zeros(vec![N_CLASSES])),
            we: store.register(
                "head.we",
                Tensor::uniform_init(vec![din, N_CLASSES], din, rng),
            ),
            be: store.register("head.be", Tensor::zeros(vec![N_CLASSES])),
            gate_w: store.register(
                "gate.w",
                Tensor::uniform_init(vec![2 * d + 2, 1], 2 * d + 2, rng),
            ),
            gate_b: store.register("gate.b", Tensor::zeros(vec![1])),
            agree_w1: store.register(
                "agree.w1",
                Tensor::uniform_init(vec![4 * d, AGREE_HIDDEN], 4 * d, rng),
            ),
            agree_b1: store.register("agree.b1", Tensor::zeros(vec![AGREE_HIDDEN])),
            agree_w2: store.register(
                "agree.w2",
                Tensor::uniform_init(vec![AGREE_HIDDEN, N_CLASSES], AGREE_HIDDEN, rng),
            ),
            agree_b2: store.register("agree.b2", Tensor::zeros(vec![N_CLASSES])),
        };
        Ok(ModelParams {
            d,
            d_c,
            d_s,
            embed,
            encoder,
            film,
            head,
        })
    }
}
