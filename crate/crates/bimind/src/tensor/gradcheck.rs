//! Central-difference gradient verification.
//!
//! A loss closure is evaluated twice per probed coordinate with the
//! parameter nudged ±step; the slope is compared against the analytic
//! gradient produced by the tape. Relative error uses the larger of the two
//! magnitudes with a floor of 1, so near-zero gradients are judged on
//! absolute error.

use std::fmt;

use crate::error::{Error, Result};
use crate::tensor::ParamStore;

/// Settings for [`grad_check`].
#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    /// Half-width of the central difference.
    pub step: f64,
    /// Maximum tolerated relative error.
    pub tol: f64,
    /// Probe at most this many evenly spaced coordinates per parameter
    /// (0 = every coordinate).
    pub max_coords_per_param: usize,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            step: 1e-5,
            tol: 1e-6,
            max_coords_per_param: 0,
        }
    }
}

/// Worst-coordinate verdict for a single parameter.
#[derive(Debug, Clone)]
pub struct ParamCheck {
    pub name: String,
    pub checked: usize,
    pub max_rel_err: f64,
    pub worst_coord: usize,
    pub analytic_at_worst: f64,
    pub numeric_at_worst: f64,
}

/// Outcome across every registered parameter.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
    pub max_rel_err: f64,
    pub tol: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err <= self.tol
    }

    pub fn worst(&self) -> Option<&ParamCheck> {
        self.params
            .iter()
            .max_by(|a, b| a.max_rel_err.total_cmp(&b.max_rel_err))
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "grad check: max rel err {:.3e} (tol {:.1e}) -> {}",
            self.max_rel_err,
            self.tol,
            if self.passed() { "pass" } else { "FAIL" }
        )?;
        for p in &self.params {
            writeln!(
                f,
                "  {:<28} coords {:<5} worst {:.3e} @ {} (analytic {:+.6e}, numeric {:+.6e})",
                p.name, p.checked, p.max_rel_err, p.worst_coord, p.analytic_at_worst, p.numeric_at_worst
            )?;
        }
        Ok(())
    }
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1.0)
}

/// Verify analytic gradients against central differences.
///
/// The closure computes the scalar loss for the current parameter values;
/// when its second argument is true it must also return the analytic
/// gradient per parameter in store order (`None` entries mean the parameter
/// did not participate and its gradient is taken as zero). The closure must
/// be deterministic: any internal randomness has to be replayed identically
/// on every call, or the finite differences measure noise instead of slope.
pub fn grad_check<F>(
    store: &mut ParamStore,
    mut loss_fn: F,
    opts: GradCheckOptions,
) -> Result<GradCheckReport>
where
    F: FnMut(&ParamStore, bool) -> Result<(f64, Option<Vec<Option<Vec<f64>>>>)>,
{
    let (base_loss, grads) = loss_fn(store, true)?;
    if !base_loss.is_finite() {
        return Err(Error::GradCheckAborted {
            reason: format!("base loss is not finite ({base_loss})"),
        });
    }
    let grads = grads.ok_or_else(|| Error::GradCheckAborted {
        reason: "loss closure returned no gradients".into(),
    })?;
    if grads.len() != store.len() {
        return Err(Error::GradCheckAborted {
            reason: format!(
                "gradient count {} does not match parameter count {}",
                grads.len(),
                store.len()
            ),
        });
    }

    let mut params = Vec::with_capacity(store.len());
    let mut overall = 0.0f64;
    for p in 0..store.len() {
        let numel = store.get(crate::tensor::ParamId(p)).numel();
        let coords: Vec<usize> = match opts.max_coords_per_param {
            0 => (0..numel).collect(),
            cap if numel <= cap => (0..numel).collect(),
            cap => {
                // Evenly spaced, always including the first coordinate.
                (0..cap).map(|i| i * numel / cap).collect()
            }
        };
        let mut check = ParamCheck {
            name: store.name(crate::tensor::ParamId(p)).to_string(),
            checked: coords.len(),
            max_rel_err: 0.0,
            worst_coord: 0,
            analytic_at_worst: 0.0,
            numeric_at_worst: 0.0,
        };
        for &c in &coords {
            let orig = store.get(crate::tensor::ParamId(p)).data[c];
            store.get_mut(crate::tensor::ParamId(p)).data[c] = orig + opts.step;
            let (plus, _) = loss_fn(store, false)?;
            store.get_mut(crate::tensor::ParamId(p)).data[c] = orig - opts.step;
            let (minus, _) = loss_fn(store, false)?;
            store.get_mut(crate::tensor::ParamId(p)).data[c] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::GradCheckAborted {
                    reason: format!(
                        "perturbed loss not finite at {}[{}]",
                        check.name, c
                    ),
                });
            }
            let numeric = (plus - minus) / (2.0 * opts.step);
            let analytic = grads[p].as_ref().map_or(0.0, |g| g[c]);
            let err = rel_err(analytic, numeric);
            if err > check.max_rel_err {
                check.max_rel_err = err;
                check.worst_coord = c;
                check.analytic_at_worst = analytic;
                check.numeric_at_worst = numeric;
            }
        }
        overall = overall.max(check.max_rel_err);
        params.push(check);
    }

    Ok(GradCheckReport {
        params,
        max_rel_err: overall,
        tol: opts.tol,
    })
}
