//! Timestep schedules, stored high-noise first (`t_0 > t_1 > ... > t_N`).

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::schedule::NoiseSchedule;

/// Final stick-breaking portion used when initializing a trainable grid.
pub const FINAL_PORTION_INIT: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    steps: Vec<f64>,
}

impl TimeGrid {
    pub fn new(steps: Vec<f64>) -> Result<Self> {
        if steps.len() < 2 {
            return Err(Error::Argument("grid needs at least two points"));
        }
        if steps.iter().any(|t| !t.is_finite()) {
            return Err(Error::Argument("grid points must be finite"));
        }
        if steps.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Argument("grid must be strictly decreasing"));
        }
        Ok(Self { steps })
    }

    pub fn steps(&self) -> &[f64] {
        &self.steps
    }

    /// Number of intervals `N`.
    pub fn len(&self) -> usize {
        self.steps.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.steps
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThetaLogits(pub Vec<f64>);

fn check_bounds(n: usize, t_max: f64, delta: f64) -> Result<()> {
    if n == 0 {
        return Err(Error::Argument("grid needs N >= 1"));
    }
    if !(delta < t_max) || !delta.is_finite() || !t_max.is_finite() {
        return Err(Error::Argument("grid needs delta < T"));
    }
    Ok(())
}

/// `t_i = (i/N)^rho (T - delta) + delta`, returned decreasing.
pub fn polynomial_grid(n: usize, rho: f64, t_max: f64, delta: f64) -> Result<TimeGrid> {
    check_bounds(n, t_max, delta)?;
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::Argument("rho must be positive"));
    }
    let mut steps: Vec<f64> = (0..=n)
        .rev()
        .map(|i| libm::pow(i as f64 / n as f64, rho) * (t_max - delta) + delta)
        .collect();
    steps[0] = t_max;
    steps[n] = delta;
    TimeGrid::new(steps)
}

/// Timesteps uniform in log-SNR between `T` and `delta`.
pub fn logsnr_grid(n: usize, schedule: &NoiseSchedule, t_max: f64, delta: f64) -> Result<TimeGrid> {
    check_bounds(n, t_max, delta)?;
    if delta <= 0.0 {
        return Err(Error::Argument("log-SNR grid needs delta > 0"));
    }
    let lo = schedule.log_snr_unchecked(t_max);
    let hi = schedule.log_snr_unchecked(delta);
    let mut steps: Vec<f64> = (0..=n)
        .map(|i| schedule.time_of_log_snr(lo + (hi - lo) * i as f64 / n as f64))
        .collect();
    steps[0] = t_max;
    steps[n] = delta;
    TimeGrid::new(steps)
}

/// `t_n = (T - delta) prod_{j <= n} sigmoid(theta_j) + delta`, with `t_0 = T`.
pub fn stickbreak_grid(theta: &ThetaLogits, t_max: f64, delta: f64) -> Result<TimeGrid> {
    check_bounds(theta.0.len(), t_max, delta)?;
    if theta.0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Argument("logits must be finite"));
    }
    let mut steps = Vec::with_capacity(theta.0.len() + 1);
    steps.push(t_max);
    let mut prod = 1.0;
    for &th in &theta.0 {
        prod *= math::sigmoid(th);
        steps.push((t_max - delta) * prod + delta);
    }
    TimeGrid::new(steps)
}

/// Logits that reproduce `grid` under [`stickbreak_grid`].
pub fn stickbreak_inverse(grid: &TimeGrid, delta: f64) -> Result<ThetaLogits> {
    let steps = grid.steps();
    let mut out = Vec::with_capacity(grid.len());
    for n in 1..steps.len() {
        if steps[n] <= delta {
            return Err(Error::Infeasible {
                index: n,
                t: steps[n],
                delta,
            });
        }
        out.push(math::logit((steps[n] - delta) / (steps[n - 1] - delta)));
    }
    Ok(ThetaLogits(out))
}

/// Time-uniform initialization for `t_1..t_{N-1}`; the last portion is
/// [`FINAL_PORTION_INIT`] because the stick-breaking map cannot reach `delta`.
pub fn init_logits(n: usize, t_max: f64, delta: f64) -> Result<ThetaLogits> {
    let uniform = polynomial_grid(n, 1.0, t_max, delta)?;
    let steps = uniform.steps();
    let mut out = Vec::with_capacity(n);
    for k in 1..n {
        out.push(math::logit((steps[k] - delta) / (steps[k - 1] - delta)));
    }
    out.push(math::logit(FINAL_PORTION_INIT));
    Ok(ThetaLogits(out))
}
