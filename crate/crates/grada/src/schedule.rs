//! The λ factor schedule and scheduled per-sample clamping of the domain
//! loss.
//!
//! λ(n) = 2/(1 + exp(−α·n/N)) − 1 rises smoothly from 0 toward 1 as
//! training progresses, weighting the domain loss in the combined
//! objective. The clamp caps each per-sample domain loss at `clamp·λ(n)`
//! before any averaging, so early-training emissions of the domain
//! discriminator cannot destabilize the run.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Progress state driving λ(n) and the clamp ceiling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleState {
    /// Current global optimizer step.
    pub step: u64,
    /// Total planned optimizer steps.
    pub total_steps: u64,
    /// Sharpness of the sigmoid ramp.
    pub alpha: f64,
    /// Ceiling coefficient: the per-sample domain loss cap is `clamp·λ(n)`.
    pub clamp: f64,
}

impl ScheduleState {
    pub fn new(total_steps: u64, alpha: f64, clamp: f64) -> Result<Self> {
        let state = ScheduleState { step: 0, total_steps, alpha, clamp };
        state.validate()?;
        Ok(state)
    }

    pub fn validate(&self) -> Result<()> {
        if self.total_steps == 0 {
            return Err(Error::Config("schedule needs total_steps > 0".into()));
        }
        if self.step > self.total_steps {
            return Err(Error::Config(format!(
                "schedule step {} past total_steps {}",
                self.step, self.total_steps
            )));
        }
        if !self.alpha.is_finite() || self.alpha <= 0.0 {
            return Err(Error::Config(format!("schedule alpha must be positive, got {}", self.alpha)));
        }
        if !self.clamp.is_finite() || self.clamp <= 0.0 {
            return Err(Error::Config(format!("schedule clamp must be positive, got {}", self.clamp)));
        }
        Ok(())
    }

    pub fn advance(&mut self) {
        self.step += 1;
    }

    /// The clamp ceiling at the current step.
    pub fn ceiling(&self) -> Result<f64> {
        Ok(self.clamp * factor(self)?)
    }
}

/// λ(n) = 2/(1 + exp(−α·n/N)) − 1.
///
/// Exactly 0 at n = 0, strictly increasing in n, and below 1 everywhere on
/// [0, N].
pub fn factor(state: &ScheduleState) -> Result<f64> {
    if state.step > state.total_steps {
        return Err(Error::Contract(format!(
            "factor: step {} past total_steps {}",
            state.step, state.total_steps
        )));
    }
    let t = state.step as f64 / state.total_steps as f64;
    Ok(2.0 / (1.0 + (-state.alpha * t).exp()) - 1.0)
}

/// Caps each per-sample domain loss at `clamp·λ(n)`, before any averaging.
///
/// Inputs are unreduced NLL terms, so negative values indicate a caller
/// bug and are rejected.
pub fn clamp_domain_loss(per_sample: &Tensor, state: &ScheduleState) -> Result<Tensor> {
    if let Some(&bad) = per_sample.data().iter().find(|v| **v < 0.0) {
        return Err(Error::Contract(format!(
            "clamp_domain_loss: negative per-sample loss {bad}"
        )));
    }
    let ceiling = state.ceiling()?;
    let data = per_sample.data().iter().map(|&v| v.min(ceiling)).collect();
    Tensor::new(per_sample.shape().to_vec(), data)
}

/// L = L_CLF + λ·L_DMN.
pub fn combine_losses(l_clf: f64, l_dmn: f64, lambda: f64) -> f64 {
    l_clf + lambda * l_dmn
}
