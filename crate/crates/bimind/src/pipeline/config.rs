//! Flat key-value run configuration: parsing, validation, and a stable
//! digest that reports can carry.

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::FusionMode;
use crate::text::N_CONTENT_FEATURES;

/// Everything a training or evaluation run needs, with desk-scale defaults.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub fusion_mode: FusionMode,
    pub lambda_agree: f64,
    pub d: usize,
    pub d_c: usize,
    pub d_s: usize,
    pub layers: usize,
    pub heads: usize,
    pub k_neighbors: usize,
    pub dropout: f64,
    pub l_max: usize,
    pub seed: u64,
    pub min_frequency: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub grad_clip_norm: f64,
    /// Train/validation/test fractions; must sum to one.
    pub split: [f64; 3],
    pub disable_aga: bool,
    pub disable_retrieval: bool,
    pub disable_gated_fusion: bool,
    pub disable_agreement_head: bool,
    pub disable_kl: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            fusion_mode: FusionMode::EntropyGate,
            lambda_agree: 0.1,
            d: 128,
            d_c: N_CONTENT_FEATURES,
            d_s: 256,
            layers: 2,
            heads: 4,
            k_neighbors: 5,
            dropout: 0.3,
            l_max: 256,
            seed: 42,
            min_frequency: 2,
            learning_rate: 1e-5,
            batch_size: 64,
            max_epochs: 50,
            patience: 3,
            grad_clip_norm: 1.0,
            split: [0.8, 0.1, 0.1],
            disable_aga: false,
            disable_retrieval: false,
            disable_gated_fusion: false,
            disable_agreement_head: false,
            disable_kl: false,
        }
    }
}

/// Parse a flat `key = value` file: one pair per line, `#` starts a
/// comment, blank lines ignored. Every key must be known and appear at
/// most once.
pub(crate) fn parse_kv(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs: Vec<(String, String)> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::BadRecord {
            line: lineno + 1,
            msg: format!("expected `key = value`, got {line:?}"),
        })?;
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if value.is_empty() {
            return Err(Error::BadRecord {
                line: lineno + 1,
                msg: format!("empty value for key {key:?}"),
            });
        }
        if pairs.iter().any(|(k, _)| *k == key) {
            return Err(Error::BadRecord {
                line: lineno + 1,
                msg: format!("duplicate key {key:?}"),
            });
        }
        pairs.push((key, value));
    }
    Ok(pairs)
}

fn parse_as<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse::<T>()
        .map_err(|_| Error::Config(format!("bad value {value:?} for key {key:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::Config(format!(
            "bad value {value:?} for key {key:?} (expected true or false)"
        ))),
    }
}

fn parse_split(value: &str) -> Result<[f64; 3]> {
    let parts: Vec<&str> = value.split('/').collect();
    if parts.len() != 3 {
        return Err(Error::Config(format!(
            "split must be three fractions like 0.8/0.1/0.1, got {value:?}"
        )));
    }
    let mut out = [0.0; 3];
    for (slot, part) in out.iter_mut().zip(parts) {
        *slot = parse_as::<f64>("split", part.trim())?;
    }
    Ok(out)
}

impl RunConfig {
    /// Parse config text over the defaults, then validate.
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = RunConfig::default();
        for (key, value) in parse_kv(text)? {
            match key.as_str() {
                "fusion_mode" => config.fusion_mode = value.parse()?,
                "lambda_agree" => config.lambda_agree = parse_as(&key, &value)?,
                "d" => config.d = parse_as(&key, &value)?,
                "d_c" => config.d_c = parse_as(&key, &value)?,
                "d_s" => config.d_s = parse_as(&key, &value)?,
                "layers" => config.layers = parse_as(&key, &value)?,
                "heads" => config.heads = parse_as(&key, &value)?,
                "k_neighbors" => config.k_neighbors = parse_as(&key, &value)?,
                "dropout" => config.dropout = parse_as(&key, &value)?,
                "l_max" => config.l_max = parse_as(&key, &value)?,
                "seed" => config.seed = parse_as(&key, &value)?,
                "min_frequency" => config.min_frequency = parse_as(&key, &value)?,
                "learning_rate" => config.learning_rate = parse_as(&key, &value)?,
                "batch_size" => config.batch_size = parse_as(&key, &value)?,
                "max_epochs" => config.max_epochs = parse_as(&key, &value)?,
                "patience" => config.patience = parse_as(&key, &value)?,
                "grad_clip_norm" => config.grad_clip_norm = parse_as(&key, &value)?,
                "split" => config.split = parse_split(&value)?,
                "disable_aga" => config.disable_aga = parse_bool(&key, &value)?,
                "disable_retrieval" => config.disable_retrieval = parse_bool(&key, &value)?,
                "disable_gated_fusion" => {
                    config.disable_gated_fusion = parse_bool(&key, &value)?;
                }
                "disable_agreement_head" => {
                    config.disable_agreement_head = parse_bool(&key, &value)?;
                }
                "disable_kl" => config.disable_kl = parse_bool(&key, &value)?,
                _ => return Err(Error::Config(format!("unknown config key {key:?}"))),
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let sum: f64 = self.split.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "split ratios must sum to 1, got {sum}"
            )));
        }
        if self.split.iter().any(|&r| r < 0.0) {
            return Err(Error::Config("split ratios must be nonnegative".into()));
        }
        // Zero is accepted so frozen-model runs can exercise the
        // early-stopping contract.
        if self.learning_rate < 0.0 {
            return Err(Error::Config("learning_rate must be nonnegative".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be positive".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be positive".into()));
        }
        if self.grad_clip_norm <= 0.0 {
            return Err(Error::Config("grad_clip_norm must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config("dropout must be in [0, 1)".into()));
        }
        if self.lambda_agree < 0.0 {
            return Err(Error::Config("lambda_agree must be nonnegative".into()));
        }
        if self.d == 0 || self.heads == 0 || self.d % self.heads != 0 {
            return Err(Error::Config(format!(
                "width {} must be a positive multiple of {} heads",
                self.d, self.heads
            )));
        }
        if self.layers == 0 {
            return Err(Error::Config("layers must be positive".into()));
        }
        if self.d_s == 0 {
            return Err(Error::Config("d_s must be positive".into()));
        }
        if self.d_c != 0 && self.d_c != N_CONTENT_FEATURES {
            return Err(Error::Config(format!(
                "d_c must be 0 or {N_CONTENT_FEATURES}, got {}",
                self.d_c
            )));
        }
        if self.k_neighbors == 0 {
            return Err(Error::Config("k_neighbors must be positive".into()));
        }
        if self.l_max == 0 {
            return Err(Error::Config("l_max must be positive".into()));
        }
        Ok(())
    }

    /// Fusion mode after applying the ablation switches.
    pub fn effective_mode(&self) -> FusionMode {
        match self.fusion_mode {
            FusionMode::EntropyGate if self.disable_gated_fusion => FusionMode::Average,
            FusionMode::AgreementHead if self.disable_agreement_head => FusionMode::Average,
            mode => mode,
        }
    }

    /// Effective agreement weight after the ablation switch.
    pub fn effective_lambda(&self) -> f64 {
        if self.disable_kl {
            0.0
        } else {
            self.lambda_agree
        }
    }

    /// Canonical one-line rendering: every key in declaration order.
    pub fn canonical(&self) -> String {
        format!(
            "fusion_mode={} lambda_agree={} d={} d_c={} d_s={} layers={} heads={} \
             k_neighbors={} dropout={} l_max={} seed={} min_frequency={} learning_rate={} \
             batch_size={} max_epochs={} patience={} grad_clip_norm={} split={}/{}/{} \
             disable_aga={} disable_retrieval={} disable_gated_fusion={} \
             disable_agreement_head={} disable_kl={}",
            self.fusion_mode,
            self.lambda_agree,
            self.d,
            self.d_c,
            self.d_s,
            self.layers,
            self.heads,
            self.k_neighbors,
            self.dropout,
            self.l_max,
            self.seed,
            self.min_frequency,
            self.learning_rate,
            self.batch_size,
            self.max_epochs,
            self.patience,
            self.grad_clip_norm,
            self.split[0],
            self.split[1],
            self.split[2],
            self.disable_aga,
            self.disable_retrieval,
            self.disable_gated_fusion,
            self.disable_agreement_head,
            self.disable_kl,
        )
    }

    /// Short stable fingerprint of the canonical rendering.
    pub fn digest(&self) -> String {
        const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
        const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
        let mut h = FNV_OFFSET;
        for b in self.canonical().bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(FNV_PRIME);
        }
        format!("{h:016x}")
    }
}
