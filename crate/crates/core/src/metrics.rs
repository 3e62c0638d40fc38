//! Sample-quality metrics and empirical convergence orders.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid::logsnr_grid;
use crate::math;
use crate::mixture::{MixtureModel, State};
use crate::schedule::NoiseSchedule;
use crate::solver::{rk4_solve, rollout, SolverKind};

/// Mean Euclidean distance between paired samples.
pub fn endpoint_error(student: &[Vec<f64>], reference: &[Vec<f64>]) -> Result<f64> {
    if student.len() != reference.len() {
        return Err(Error::Length {
            expected: reference.len(),
            got: student.len(),
        });
    }
    if student.is_empty() {
        return Err(Error::Argument("endpoint error needs at least one pair"));
    }
    let total: f64 = student.iter().zip(reference).map(|(a, b)| math::dist(a, b)).sum();
    Ok(total / student.len() as f64)
}

/// 2-Wasserstein distance between Gaussians with diagonal covariances.
pub fn w2_gaussian(mu1: &[f64], var1: &[f64], mu2: &[f64], var2: &[f64]) -> Result<f64> {
    let d = mu1.len();
    if var1.len() != d || mu2.len() != d || var2.len() != d {
        return Err(Error::Argument("w2 inputs must share one dimension"));
    }
    if var1.iter().chain(var2).any(|v| !(*v > 0.0)) {
        return Err(Error::Argument("variances must be positive"));
    }
    let mut s = 0.0;
    for i in 0..d {
        let dm = mu1[i] - mu2[i];
        let ds = math::sqrt(var1[i]) - math::sqrt(var2[i]);
        s += dm * dm + ds * ds;
    }
    Ok(math::sqrt(s))
}

fn mean_pairwise(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let mut s = 0.0;
    for x in a {
        for y in b {
            s += math::dist(x, y);
        }
    }
    s / (a.len() * b.len()) as f64
}

fn mean_self(a: &[Vec<f64>]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            s += math::dist(&a[i], &a[j]);
        }
    }
    2.0 * s / (a.len() * a.len()) as f64
}

/// V-statistic energy distance `2 E|X-Y| - E|X-X'| - E|Y-Y'|`.
pub fn energy_distance(x: &[Vec<f64>], y: &[Vec<f64>]) -> Result<f64> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::Argument("energy distance needs non-empty sample sets"));
    }
    Ok(2.0 * mean_pairwise(x, y) - mean_self(x) - mean_self(y))
}

/// Per-coordinate sample mean and (population) variance.
pub fn moments(samples: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let n = samples.len() as f64;
    let d = samples.first().map_or(0, |s| s.len());
    let mut mean = alloc::vec![0.0; d];
    for s in samples {
        for i in 0..d {
            mean[i] += s[i];
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = alloc::vec![0.0; d];
    for s in samples {
        for i in 0..d {
            let r = s[i] - mean[i];
            var[i] += r * r;
        }
    }
    var.iter_mut().for_each(|v| *v /= n);
    (mean, var)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderEstimate {
    pub steps: Vec<usize>,
    pub errors: Vec<f64>,
    /// Least-squares slope of `log(error)` against `log(1/N)`.
    pub order: f64,
    /// Root-mean-square residual of the fit.
    pub residual: f64,
}

pub fn fit_order(steps: &[usize], errors: &[f64]) -> Result<OrderEstimate> {
    if steps.len() < 3 || steps.len() != errors.len() {
        return Err(Error::Argument("order fit needs at least three (N, error) pairs"));
    }
    if errors.contains(&0.0) {
        return Err(Error::Degenerate("zero error"));
    }
    if errors.iter().any(|e| !(*e > 0.0) || !e.is_finite()) {
        return Err(Error::Argument("errors must be positive and finite"));
    }
    let xs: Vec<f64> = steps.iter().map(|n| -math::ln(*n as f64)).collect();
    let ys: Vec<f64> = errors.iter().map(|e| math::ln(*e)).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::Degenerate("step counts must differ"));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let order = sxy / sxx;
    let icpt = my - order * mx;
    let rss: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let r = y - icpt - order * x;
            r * r
        })
        .sum();
    Ok(OrderEstimate {
        steps: steps.to_vec(),
        errors: errors.to_vec(),
        order,
        residual: math::sqrt(rss / k),
    })
}

/// Measures the global error of `kind` on log-SNR grids of the given sizes.
///
/// The reference is the exact transport for a single Gaussian, otherwise a
/// 10,000-step RK4 solve.
pub fn convergence_order(
    kind: SolverKind,
    model: &MixtureModel,
    schedule: &NoiseSchedule,
    x_t: &[f64],
    steps: &[usize],
) -> Result<OrderEstimate> {
    let exact = match model.exact_gaussian_path(schedule, &State::new(x_t.to_vec(), schedule.t_max), schedule.delta) {
        Ok(x) => x,
        Err(Error::Unsupported(_)) => rk4_solve(model, schedule, x_t, 10_000)?,
        Err(e) => return Err(e),
    };
    let mut errors = Vec::with_capacity(steps.len());
    for &n in steps {
        let grid = logsnr_grid(n, schedule, schedule.t_max, schedule.delta)?;
        let x = rollout(kind, model, schedule, &grid, x_t)?;
        errors.push(math::dist(&x, &exact));
    }
    fit_order(steps, &errors)
}
