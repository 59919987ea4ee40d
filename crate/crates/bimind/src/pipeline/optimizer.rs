//! Adam with global-norm gradient clipping.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{ParamId, ParamStore};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPSILON: f64 = 1e-8;

/// What one optimizer step did.
#[derive(Debug, Clone, Copy)]
pub struct StepReport {
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
    pub clipped: bool,
    /// True when a non-finite gradient made the step a no-op.
    pub skipped: bool,
}

/// Serializable optimizer state for checkpoints.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    pub t: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

/// Adam over a parameter store, moments kept in registration order.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    clip: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(store: &ParamStore, lr: f64, clip: f64) -> Result<Self> {
        if lr < 0.0 {
            return Err(Error::Config("learning rate must be nonnegative".into()));
        }
        if clip <= 0.0 {
            return Err(Error::Config("clip norm must be positive".into()));
        }
        let sizes: Vec<usize> = (0..store.len())
            .map(|i| store.get(ParamId(i)).numel())
            .collect();
        Ok(Adam {
            lr,
            clip,
            t: 0,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        })
    }

    /// One bias-corrected update after global-norm clipping. Parameters
    /// without a gradient are left untouched (their moments still decay
    /// toward zero only when a gradient arrives, i.e. not here).
    pub fn step(
        &mut self,
        store: &mut ParamStore,
        grads: &[Option<Vec<f64>>],
    ) -> Result<StepReport> {
        if grads.len() != self.m.len() {
            return Err(Error::Config(format!(
                "{} gradients for {} parameters",
                grads.len(),
                self.m.len()
            )));
        }
        let mut sq_sum = 0.0;
        for g in grads.iter().flatten() {
            for &v in g {
                sq_sum += v * v;
            }
        }
        let grad_norm = sq_sum.sqrt();
        if !grad_norm.is_finite() {
            log::warn!("skipping optimizer step: non-finite gradient norm {grad_norm}");
            return Ok(StepReport {
                grad_norm,
                clipped: false,
                skipped: true,
            });
        }
        let scale = if grad_norm > self.clip {
            self.clip / grad_norm
        } else {
            1.0
        };

        self.t += 1;
        let bc1 = 1.0 - BETA1.powi(self.t as i32);
        let bc2 = 1.0 - BETA2.powi(self.t as i32);
        for (p, grad) in grads.iter().enumerate() {
            let Some(grad) = grad else { continue };
            let tensor = store.get_mut(ParamId(p));
            let m = &mut self.m[p];
            let v = &mut self.v[p];
            for (c, &raw) in grad.iter().enumerate() {
                let g = raw * scale;
                m[c] = BETA1 * m[c] + (1.0 - BETA1) * g;
                v[c] = BETA2 * v[c] + (1.0 - BETA2) * g * g;
                let m_hat = m[c] / bc1;
                let v_hat = v[c] / bc2;
                tensor.data[c] -= self.lr * m_hat / (v_hat.sqrt() + EPSILON);
            }
        }
        Ok(StepReport {
            grad_norm,
            clipped: scale != 1.0,
            skipped: false,
        })
    }

    pub fn state(&self) -> AdamState {
        AdamState {
            t: self.t,
            m: self.m.clone(),
            v: self.v.clone(),
        }
    }

    pub fn from_state(state: AdamState, lr: f64, clip: f64) -> Result<Self> {
        if state.m.len() != state.v.len() {
            return Err(Error::BadCheckpoint(
                "optimizer moment vectors disagree in length".into(),
            ));
        }
        Ok(Adam {
            lr,
            clip,
            t: state.t,
            m: state.m,
            v: state.v,
        })
    }
}
