//! Isotropic Gaussian-mixture data distributions and their closed-form
//! diffusion quantities.
//!
//! Under the schedule `x_t = alpha_t x_0 + sigma_t eps`, component `k` of the
//! mixture is pushed to `N(alpha_t mu_k, v_k I)` with
//! `v_k = alpha_t^2 s_k^2 + sigma_t^2`. The marginal score is therefore the
//! responsibility-weighted sum of per-component Gaussian scores, and every
//! derivative the solvers need (in `x` and in `t`) has a closed form.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::schedule::NoiseSchedule;

#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub weight: f64,
    pub mean: Vec<f64>,
    /// Isotropic variance `s_k^2`.
    pub var: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureModel {
    components: Vec<Component>,
    dim: usize,
}

/// A point on the diffusion path.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub x: Vec<f64>,
    pub t: f64,
}

impl State {
    pub fn new(x: Vec<f64>, t: f64) -> Self {
        Self { x, t }
    }
}

/// Per-component posterior quantities at a fixed `(x, t)`.
struct Posterior {
    alpha: f64,
    sigma: f64,
    gamma: Vec<f64>,
    /// `v_k = alpha^2 s_k^2 + sigma^2`
    v: Vec<f64>,
    /// `x - alpha mu_k`, flattened `K x d`
    diff: Vec<f64>,
}

impl MixtureModel {
    pub fn new(components: Vec<Component>) -> Result<Self> {
        let first = components
            .first()
            .ok_or(Error::Argument("mixture needs at least one component"))?;
        let dim = first.mean.len();
        if dim == 0 {
            return Err(Error::Argument("mixture dimension must be positive"));
        }
        let mut total = 0.0;
        for c in &components {
            if c.mean.len() != dim {
                return Err(Error::Length {
                    expected: dim,
                    got: c.mean.len(),
                });
            }
            if !(c.weight > 0.0 && c.weight <= 1.0) {
                return Err(Error::Argument("component weight must lie in (0, 1]"));
            }
            if !(c.var > 0.0 && c.var.is_finite()) {
                return Err(Error::Argument("component variance must be positive"));
            }
            if c.mean.iter().any(|m| !m.is_finite()) {
                return Err(Error::Argument("component mean must be finite"));
            }
            total += c.weight;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Argument("mixture weights must sum to 1"));
        }
        Ok(Self { components, dim })
    }

    /// One isotropic Gaussian `N(mean, var I)`.
    pub fn gaussian(mean: Vec<f64>, var: f64) -> Result<Self> {
        Self::new(vec![Component {
            weight: 1.0,
            mean,
            var,
        }])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    fn check(&self, schedule: &NoiseSchedule, x: &[f64], t: f64) -> Result<()> {
        schedule.check(t)?;
        if x.len() != self.dim {
            return Err(Error::Length {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    fn posterior(&self, schedule: &NoiseSchedule, x: &[f64], t: f64) -> Posterior {
        let (alpha, sigma) = schedule.alpha_sigma_unchecked(t);
        let d = self.dim;
        let k = self.components.len();
        let mut v = Vec::with_capacity(k);
        let mut diff = Vec::with_capacity(k * d);
        let mut logw = Vec::with_capacity(k);
        for c in &self.components {
            let vk = alpha * alpha * c.var + sigma * sigma;
            let mut sq = 0.0;
            for (xi, mi) in x.iter().zip(&c.mean) {
                let r = xi - alpha * mi;
                sq += r * r;
                diff.push(r);
            }
            logw.push(math::ln(c.weight) - 0.5 * d as f64 * math::ln(vk) - 0.5 * sq / vk);
            v.push(vk);
        }
        let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut gamma: Vec<f64> = logw.iter().map(|l| math::exp(l - max)).collect();
        let z: f64 = gamma.iter().sum();
        for g in &mut gamma {
            *g /= z;
        }
        Posterior {
            alpha,
            sigma,
            gamma,
            v,
            diff,
        }
    }

    fn score_from(&self, p: &Posterior) -> Vec<f64> {
        let d = self.dim;
        let mut s = vec![0.0; d];
        for (k, (&g, &vk)) in p.gamma.iter().zip(&p.v).enumerate() {
            for i in 0..d {
                s[i] -= g * p.diff[k * d + i] / vk;
            }
        }
        s
    }

    /// `grad_x log p_t(x)`.
    pub fn score(&self, schedule: &NoiseSchedule, state: &State) -> Result<Vec<f64>> {
        self.check(schedule, &state.x, state.t)?;
        Ok(self.score_at(schedule, &state.x, state.t))
    }

    pub(crate) fn score_at(&self, schedule: &NoiseSchedule, x: &[f64], t: f64) -> Vec<f64> {
        let p = self.posterior(schedule, x, t);
        self.score_from(&p)
    }

    /// Posterior mean `E[x_0 | x_t = x]` via Tweedie's formula.
    pub fn data_prediction(&self, schedule: &NoiseSchedule, state: &State) -> Result<Vec<f64>> {
        self.check(schedule, &state.x, state.t)?;
        Ok(self.data_prediction_at(schedule, &state.x, state.t))
    }

    pub(crate) fn data_prediction_at(&self, schedule: &NoiseSchedule, x: &[f64], t: f64) -> Vec<f64> {
        let p = self.posterior(schedule, x, t);
        let s = self.score_from(&p);
        let s2 = p.sigma * p.sigma;
        x.iter()
            .zip(&s)
            .map(|(xi, si)| (xi + s2 * si) / p.alpha)
            .collect()
    }

    /// PF-ODE velocity `f(t) x - g^2(t)/2 * score`.
    pub fn velocity(&self, schedule: &NoiseSchedule, state: &State) -> Result<Vec<f64>> {
        self.check(schedule, &state.x, state.t)?;
        Ok(self.velocity_at(schedule, &state.x, state.t))
    }

    pub(crate) fn velocity_at(&self, schedule: &NoiseSchedule, x: &[f64], t: f64) -> Vec<f64> {
        let f = schedule.drift(t);
        let g2 = schedule.diffusion_sq(t);
        let s = self.score_at(schedule, x, t);
        x.iter()
            .zip(&s)
            .map(|(xi, si)| f * xi - 0.5 * g2 * si)
            .collect()
    }

    /// `w^T (d score / dx)`; the Hessian of `log p_t` is symmetric so this is
    /// also the Hessian-vector product.
    pub fn score_vjp(&self, schedule: &NoiseSchedule, state: &State, w: &[f64]) -> Result<Vec<f64>> {
        self.check(schedule, &state.x, state.t)?;
        if w.len() != self.dim {
            return Err(Error::Length {
                expected: self.dim,
                got: w.len(),
            });
        }
        let p = self.posterior(schedule, &state.x, state.t);
        Ok(self.score_vjp_from(&p, w))
    }

    fn score_vjp_from(&self, p: &Posterior, w: &[f64]) -> Vec<f64> {
        // sum_k gamma_k (-I / v_k + g_k g_k^T) - s s^T, with g_k = -(x - alpha mu_k) / v_k
        let d = self.dim;
        let s = self.score_from(p);
        let sw = math::dot(&s, w);
        let mut out: Vec<f64> = s.iter().map(|si| -si * sw).collect();
        for (k, (&g, &vk)) in p.gamma.iter().zip(&p.v).enumerate() {
            let gk = &p.diff[k * d..(k + 1) * d];
            // g_k . w with the sign folded in below (g_k = -diff / v_k)
            let gw = -math::dot(gk, w) / vk;
            for i in 0..d {
                out[i] += g * (-w[i] / vk + (-gk[i] / vk) * gw);
            }
        }
        out
    }

    /// Jacobian of the data prediction with respect to `x` (row-major `d x d`)
    /// assembled from `score_vjp`, together with the partial derivative with
    /// respect to `t` at fixed `x`.
    pub(crate) fn data_prediction_jacobians(
        &self,
        schedule: &NoiseSchedule,
        x: &[f64],
        t: f64,
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let d = self.dim;
        let p = self.posterior(schedule, x, t);
        let s = self.score_from(&p);
        let s2 = p.sigma * p.sigma;
        let value: Vec<f64> = x
            .iter()
            .zip(&s)
            .map(|(xi, si)| (xi + s2 * si) / p.alpha)
            .collect();
        let mut jac = vec![0.0; d * d];
        let mut e = vec![0.0; d];
        for i in 0..d {
            e[i] = 1.0;
            let hv = self.score_vjp_from(&p, &e);
            for j in 0..d {
                jac[i * d + j] = (e[j] + s2 * hv[j]) / p.alpha;
            }
            e[i] = 0.0;
        }
        let dt = self.data_prediction_dt_from(schedule, &p, t);
        (value, jac, dt)
    }

    /// `d x0_hat / dt` at fixed `x`.
    pub fn data_prediction_dt(&self, schedule: &NoiseSchedule, state: &State) -> Result<Vec<f64>> {
        self.check(schedule, &state.x, state.t)?;
        let p = self.posterior(schedule, &state.x, state.t);
        Ok(self.data_prediction_dt_from(schedule, &p, state.t))
    }

    fn data_prediction_dt_from(&self, schedule: &NoiseSchedule, p: &Posterior, t: f64) -> Vec<f64> {
        // x0_hat = sum_k gamma_k m_k with m_k = mu_k + beta_k (x - alpha mu_k),
        // beta_k = alpha s_k^2 / v_k; differentiate gamma_k through its log-weight.
        let d = self.dim;
        let (da, ds) = schedule.alpha_sigma_dot(t);
        let (alpha, sigma) = (p.alpha, p.sigma);
        let kn = self.components.len();
        let mut dlogw = Vec::with_capacity(kn);
        for (k, c) in self.components.iter().enumerate() {
            let vk = p.v[k];
            let dv = 2.0 * alpha * da * c.var + 2.0 * sigma * ds;
            let r = &p.diff[k * d..(k + 1) * d];
            let sq = math::dot(r, r);
            let rm = math::dot(r, &c.mean);
            dlogw.push(-0.5 * d as f64 * dv / vk + da * rm / vk + 0.5 * sq * dv / (vk * vk));
        }
        let mean_dlogw: f64 = p.gamma.iter().zip(&dlogw).map(|(g, l)| g * l).sum();
        let mut out = vec![0.0; d];
        for (k, c) in self.components.iter().enumerate() {
            let vk = p.v[k];
            let dv = 2.0 * alpha * da * c.var + 2.0 * sigma * ds;
            let beta = alpha * c.var / vk;
            let dbeta = c.var * (da * vk - alpha * dv) / (vk * vk);
            let dgamma = p.gamma[k] * (dlogw[k] - mean_dlogw);
            let r = &p.diff[k * d..(k + 1) * d];
            for i in 0..d {
                let m = c.mean[i] + beta * r[i];
                let dm = dbeta * r[i] - beta * da * c.mean[i];
                out[i] += dgamma * m + p.gamma[k] * dm;
            }
        }
        out
    }

    /// Exact PF-ODE transport of `from` to time `to_t` for a single
    /// isotropic Gaussian under the variance-exploding schedule.
    pub fn exact_gaussian_path(&self, schedule: &NoiseSchedule, from: &State, to_t: f64) -> Result<Vec<f64>> {
        if self.components.len() != 1 {
            return Err(Error::Unsupported("exact path needs a single component"));
        }
        if schedule.kind != crate::schedule::ScheduleKind::VarianceExploding {
            return Err(Error::Unsupported("exact path needs the variance-exploding schedule"));
        }
        self.check(schedule, &from.x, from.t)?;
        schedule.check(to_t)?;
        if to_t == from.t {
            return Ok(from.x.clone());
        }
        let c = &self.components[0];
        let k = math::sqrt((c.var + to_t * to_t) / (c.var + from.t * from.t));
        Ok(from
            .x
            .iter()
            .zip(&c.mean)
            .map(|(xi, mi)| mi + k * (xi - mi))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ve(t_max: f64, delta: f64) -> NoiseSchedule {
        NoiseSchedule::variance_exploding(t_max, delta).unwrap()
    }

    fn two_modes() -> MixtureModel {
        MixtureModel::new(vec![
            Component { weight: 0.5, mean: vec![-1.0], var: 0.01 },
            Component { weight: 0.5, mean: vec![1.0], var: 0.01 },
        ])
        .unwrap()
    }

    // Independent oracle: log-density of the noised mixture.
    fn log_density(m: &MixtureModel, s: &NoiseSchedule, x: &[f64], t: f64) -> f64 {
        let (a, sg) = s.alpha_sigma(t).unwrap();
        let d = x.len() as f64;
        let terms: Vec<f64> = m
            .components()
            .iter()
            .map(|c| {
                let v = a * a * c.var + sg * sg;
                let sq: f64 = x.iter().zip(&c.mean).map(|(xi, mi)| (xi - a * mi).powi(2)).sum();
                c.weight.ln() - 0.5 * d * (2.0 * core::f64::consts::PI * v).ln() - 0.5 * sq / v
            })
            .collect();
        let mx = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        mx + terms.iter().map(|l| (l - mx).exp()).sum::<f64>().ln()
    }

    #[test]
    fn single_gaussian_score() {
        let m = MixtureModel::gaussian(vec![0.0], 1.0).unwrap();
        let s = ve(10.0, 1e-3);
        assert_eq!(m.score(&s, &State::new(vec![2.0], 1.0)).unwrap(), vec![-1.0]);
        assert_eq!(m.velocity(&s, &State::new(vec![2.0], 1.0)).unwrap(), vec![1.0]);
    }

    #[test]
    fn score_vanishes_at_mode() {
        let m = MixtureModel::gaussian(vec![0.7, -1.2], 0.3).unwrap();
        let s = ve(10.0, 1e-3);
        let st = State::new(vec![0.7, -1.2], 2.5);
        assert!(m.score(&s, &st).unwrap().iter().all(|v| *v == 0.0));
        assert!(m.velocity(&s, &st).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn two_component_score_matches_log_density_fd() {
        let m = two_modes();
        let s = ve(10.0, 1e-3);
        let h = 1e-5;
        let fd = (log_density(&m, &s, &[0.3 + h], 0.1) - log_density(&m, &s, &[0.3 - h], 0.1)) / (2.0 * h);
        let got = m.score(&s, &State::new(vec![0.3], 0.1)).unwrap()[0];
        // frozen from a 50-digit evaluation of d/dx log p_t
        let frozen = 34.999_999_999_990_64;
        assert!((got - frozen).abs() < 1e-12 * frozen);
        assert!((got - fd).abs() < 1e-6 * frozen.abs());
        let v = m.velocity(&s, &State::new(vec![0.3], 0.1)).unwrap()[0];
        assert!((v - (-0.1 * frozen)).abs() < 1e-12);
    }

    #[test]
    fn data_prediction_examples() {
        let m = MixtureModel::gaussian(vec![0.0], 1.0).unwrap();
        let s = ve(10.0, 1e-3);
        let x0 = m.data_prediction(&s, &State::new(vec![2.0], 2.0)).unwrap()[0];
        assert!((x0 - 0.4).abs() < 1e-15);
        for x in [-5.0, -0.3, 0.0, 1.0, 7.0] {
            let p = m.data_prediction(&s, &State::new(vec![x], 1e-3)).unwrap()[0];
            assert!((p - x).abs() <= 1.1e-6 * f64::abs(x) + 1.1e-6);
        }
        let m = MixtureModel::gaussian(vec![1.5, -2.0], 0.5).unwrap();
        let p = m.data_prediction(&s, &State::new(vec![1.5, -2.0], 3.0)).unwrap();
        assert_eq!(p, vec![1.5, -2.0]);
    }

    #[test]
    fn tweedie_identity() {
        let m = two_modes();
        let s = ve(10.0, 1e-3);
        for (x, t) in [(0.3, 0.1), (-2.0, 1.0), (5.0, 7.0)] {
            let st = State::new(vec![x], t);
            let x0 = m.data_prediction(&s, &st).unwrap()[0];
            let sc = m.score(&s, &st).unwrap()[0];
            assert!((x0 - (x + t * t * sc)).abs() <= 4.0 * f64::EPSILON * x0.abs().max(x.abs()));
        }
    }

    #[test]
    fn score_vjp_examples() {
        let m = MixtureModel::gaussian(vec![0.0], 1.0).unwrap();
        let s = ve(10.0, 1e-3);
        let st = State::new(vec![0.8], 1.0);
        assert_eq!(m.score_vjp(&s, &st, &[4.0]).unwrap(), vec![-2.0]);
        assert_eq!(m.score_vjp(&s, &st, &[0.0]).unwrap(), vec![0.0]);

        let m = two_modes();
        let st = State::new(vec![0.3], 0.1);
        let h = 1e-5;
        let fd = (m.score_at(&s, &[0.3 + h], 0.1)[0] - m.score_at(&s, &[0.3 - h], 0.1)[0]) / (2.0 * h);
        let got = m.score_vjp(&s, &st, &[1.0]).unwrap()[0];
        assert!((got - fd).abs() < 1e-5 * fd.abs());
        assert!((got - (-49.999_999_999_064_24)).abs() < 1e-9);
    }

    #[test]
    fn data_prediction_time_derivative_matches_fd() {
        let m = MixtureModel::new(vec![
            Component { weight: 0.3, mean: vec![-1.0, 0.5], var: 0.05 },
            Component { weight: 0.7, mean: vec![1.2, -0.4], var: 0.2 },
        ])
        .unwrap();
        let s = ve(10.0, 1e-3);
        for (x, t) in [([0.2, 0.1], 0.4), ([-3.0, 2.0], 2.0), ([0.9, -0.5], 0.05)] {
            let an = m.data_prediction_dt(&s, &State::new(x.to_vec(), t)).unwrap();
            let h = 1e-6 * t;
            let p = m.data_prediction_at(&s, &x, t + h);
            let q = m.data_prediction_at(&s, &x, t - h);
            for i in 0..2 {
                let fd = (p[i] - q[i]) / (2.0 * h);
                assert!((an[i] - fd).abs() <= 1e-6 * fd.abs().max(1.0), "{an:?} vs {fd}");
            }
        }
    }

    #[test]
    fn exact_path_examples() {
        let s = ve(10.0, 1e-3);
        let m = MixtureModel::gaussian(vec![0.0], 1.0).unwrap();
        let from = State::new(vec![3.0], 2.0);
        assert_eq!(m.exact_gaussian_path(&s, &from, 2.0).unwrap(), vec![3.0]);
        let tiny = ve(10.0, 1e-12);
        let x = m.exact_gaussian_path(&tiny, &from, 1e-12).unwrap()[0];
        assert!((x - 1.341_640_786_499_873_8).abs() < 1e-12);
        let m1 = MixtureModel::gaussian(vec![1.0], 0.4).unwrap();
        assert_eq!(m1.exact_gaussian_path(&s, &State::new(vec![1.0], 2.0), 0.3).unwrap(), vec![1.0]);
        assert!(matches!(
            two_modes().exact_gaussian_path(&s, &from, 1.0),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn constructor_validation() {
        assert!(MixtureModel::new(vec![]).is_err());
        assert!(MixtureModel::gaussian(vec![0.0], 0.0).is_err());
        assert!(MixtureModel::new(vec![
            Component { weight: 0.5, mean: vec![0.0], var: 1.0 },
            Component { weight: 0.4, mean: vec![0.0], var: 1.0 },
        ])
        .is_err());
    }
}
