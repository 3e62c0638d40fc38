//! Forward-noising schedules: `x_t = alpha_t x_0 + sigma_t eps`.

use crate::error::{Error, Result};
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    /// `alpha_t = 1`, `sigma_t = t`.
    VarianceExploding,
}

/// A noise schedule restricted to `[delta, t_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSchedule {
    pub kind: ScheduleKind,
    pub t_max: f64,
    pub delta: f64,
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        Self {
            kind: ScheduleKind::VarianceExploding,
            t_max: 10.0,
            delta: 1e-3,
        }
    }
}

impl NoiseSchedule {
    pub fn variance_exploding(t_max: f64, delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < t_max && t_max.is_finite()) {
            return Err(Error::Argument("schedule requires 0 < delta < T"));
        }
        Ok(Self {
            kind: ScheduleKind::VarianceExploding,
            t_max,
            delta,
        })
    }

    pub fn check(&self, t: f64) -> Result<()> {
        if t >= self.delta && t <= self.t_max {
            Ok(())
        } else {
            Err(Error::OutOfRange {
                t,
                lo: self.delta,
                hi: self.t_max,
            })
        }
    }

    /// `(alpha_t, sigma_t)`.
    pub fn alpha_sigma(&self, t: f64) -> Result<(f64, f64)> {
        self.check(t)?;
        Ok(self.alpha_sigma_unchecked(t))
    }

    /// Same as [`alpha_sigma`](Self::alpha_sigma) without the range check; solvers that
    /// have already validated their grid use this.
    pub fn alpha_sigma_unchecked(&self, t: f64) -> (f64, f64) {
        match self.kind {
            ScheduleKind::VarianceExploding => (1.0, t),
        }
    }

    /// `(d alpha/dt, d sigma/dt)`.
    pub fn alpha_sigma_dot(&self, _t: f64) -> (f64, f64) {
        match self.kind {
            ScheduleKind::VarianceExploding => (0.0, 1.0),
        }
    }

    /// `lambda_t = log(alpha_t / sigma_t)`, decreasing in `t`.
    pub fn log_snr(&self, t: f64) -> Result<f64> {
        self.check(t)?;
        Ok(self.log_snr_unchecked(t))
    }

    pub fn log_snr_unchecked(&self, t: f64) -> f64 {
        let (a, s) = self.alpha_sigma_unchecked(t);
        math::ln(a) - math::ln(s)
    }

    /// `d lambda / dt`.
    pub fn log_snr_dot(&self, t: f64) -> f64 {
        let (a, s) = self.alpha_sigma_unchecked(t);
        let (da, ds) = self.alpha_sigma_dot(t);
        da / a - ds / s
    }

    /// Inverse of `log_snr` on the schedule's domain (unclamped).
    pub fn time_of_log_snr(&self, lambda: f64) -> f64 {
        match self.kind {
            ScheduleKind::VarianceExploding => math::exp(-lambda),
        }
    }

    /// Drift `f(t) = d log alpha / dt`.
    pub fn drift(&self, t: f64) -> f64 {
        let (a, _) = self.alpha_sigma_unchecked(t);
        let (da, _) = self.alpha_sigma_dot(t);
        da / a
    }

    /// Squared diffusion `g^2(t) = d sigma^2/dt - 2 f(t) sigma^2`.
    pub fn diffusion_sq(&self, t: f64) -> f64 {
        let (_, s) = self.alpha_sigma_unchecked(t);
        let (_, ds) = self.alpha_sigma_dot(t);
        2.0 * s * ds - 2.0 * self.drift(t) * s * s
    }
}
