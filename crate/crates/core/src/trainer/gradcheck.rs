//! Central-difference verification of [`compute_gradients`].

use serde::{Deserialize, Serialize};

use super::objective::{compute_gradients, Budget};
use crate::error::Result;
use crate::model::{EncodedExample, ModelConfig};
use crate::params::ParamStore;

/// Denominator floor of the relative error, so entries whose true gradient
/// is essentially zero are judged on absolute error.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayCheck {
    pub name: String,
    pub entries: usize,
    pub max_rel_error: f64,
    pub max_abs_gradient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub step_size: f64,
    pub arrays: Vec<ArrayCheck>,
    pub max_rel_error: f64,
}

/// Compares every analytic gradient entry against
/// `(L(θ + h) − L(θ − h)) / 2h` of the batch objective.
pub fn gradient_check(store: &ParamStore, batch: &[EncodedExample], cfg: &ModelConfig, budget: Budget, h: f64) -> Result<GradCheckReport> {
    let mut work = store.clone();
    compute_gradients(&mut work, batch, cfg, budget)?;
    let analytic = work.grads.clone();
    let mut arrays = Vec::new();
    for (a_idx, (name, grad)) in analytic.arrays().into_iter().enumerate() {
        let mut max_rel: f64 = 0.0;
        let mut max_abs: f64 = 0.0;
        for i in 0..grad.data.len() {
            let original = work.values.arrays()[a_idx].1.data[i];
            let mut eval = |x: f64| -> Result<f64> {
                work.values.arrays_mut()[a_idx].1.data[i] = x;
                compute_gradients(&mut work, batch, cfg, budget)
            };
            let plus = eval(original + h)?;
            let minus = eval(original - h)?;
            work.values.arrays_mut()[a_idx].1.data[i] = original;
            let numeric = (plus - minus) / (2.0 * h);
            let a = grad.data[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
            max_rel = max_rel.max(rel);
            max_abs = max_abs.max(a.abs());
        }
        arrays.push(ArrayCheck {
            name: name.to_string(),
            entries: grad.data.len(),
            max_rel_error: max_rel,
            max_abs_gradient: max_abs,
        });
    }
    let max_rel_error = arrays.iter().map(|a| a.max_rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport {
        step_size: h,
        arrays,
        max_rel_error,
    })
}
