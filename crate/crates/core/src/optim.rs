//! Adam, parameter EMA and global-norm gradient clipping.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Length { expected, got });
    }
    Ok(())
}

/// One bias-corrected Adam update in place. Weight decay is the classic
/// L2 form (added to the gradient).
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    check_len(params.len(), grads.len())?;
    check_len(params.len(), state.m.len())?;
    check_len(params.len(), state.v.len())?;
    state.t += 1;
    let bc1 = 1.0 - libm::pow(cfg.beta1, state.t as f64);
    let bc2 = 1.0 - libm::pow(cfg.beta2, state.t as f64);
    for i in 0..params.len() {
        let g = grads[i] + cfg.weight_decay * params[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= cfg.lr * m_hat / (math::sqrt(v_hat) + cfg.eps);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmaState {
    pub shadow: Vec<f64>,
}

impl EmaState {
    pub fn new(params: &[f64]) -> Self {
        Self {
            shadow: params.to_vec(),
        }
    }
}

/// `shadow = decay * shadow + (1 - decay) * params`.
pub fn ema_update(ema: &mut EmaState, params: &[f64], decay: f64) -> Result<()> {
    check_len(ema.shadow.len(), params.len())?;
    for (s, p) in ema.shadow.iter_mut().zip(params) {
        *s = decay * *s + (1.0 - decay) * p;
    }
    Ok(())
}

/// Rescales `grads` to global L2 norm at most `max_norm` when it is larger.
/// Returns the norm before clipping.
pub fn clip_grad_norm(grads: &mut [f64], max_norm: f64) -> Result<f64> {
    if !(max_norm > 0.0) {
        return Err(Error::Argument("clip norm must be positive"));
    }
    let norm = math::norm(grads);
    if norm > max_norm {
        let orig = grads.to_vec();
        let mut k = max_norm / norm;
        loop {
            for (g, o) in grads.iter_mut().zip(&orig) {
                *g = o * k;
            }
            // rounding can leave the rescaled norm a few ulps above the bound
            if math::norm(grads) <= max_norm {
                break;
            }
            k *= 1.0 - 2.0 * f64::EPSILON;
        }
    }
    Ok(norm)
}
