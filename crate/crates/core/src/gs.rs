//! Generalized Solver: trainable timesteps, evaluation-time offsets and
//! additive coefficient corrections over the 3M multistep update.
//!
//! The flat parameter layout, used by the optimizer and checkpoints, is
//! `theta | xi | a_diag | a_off | c_recent | c_old`.
//!
//! * `a_off` holds `a[j, n]` for `j < n` at `n (n - 1) / 2 + j`.
//! * `c_recent` holds, per step `n`, up to three corrections applied to the
//!   `psi_1`, `D1` and `D2` coefficients, in that order.
//! * `c_old` holds `c[j, n]` for `j <= n - 3` at `(n - 3)(n - 2) / 2 + j`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid::{init_logits, stickbreak_grid, stickbreak_inverse, ThetaLogits, TimeGrid};
use crate::math;
use crate::mixture::MixtureModel;
use crate::schedule::NoiseSchedule;
use crate::solver::Trajectory;
use crate::tape::{Tape, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct GsParams {
    pub theta: ThetaLogits,
    pub xi: Vec<f64>,
    pub a_diag: Vec<f64>,
    pub a_off: Vec<f64>,
    pub c_recent: Vec<f64>,
    pub c_old: Vec<f64>,
}

/// Sizes of the six parameter groups for `n` steps.
pub fn group_sizes(n: usize) -> [usize; 6] {
    let c_recent = if n >= 2 { 3 * n - 3 } else { n };
    let c_old = if n >= 3 { (n - 3) * (n - 2) / 2 } else { 0 };
    [n, n, n, n * n.saturating_sub(1) / 2, c_recent, c_old]
}

pub fn param_count(n: usize) -> usize {
    group_sizes(n).iter().sum()
}

pub fn a_off_index(j: usize, n: usize) -> usize {
    debug_assert!(j < n);
    n * (n - 1) / 2 + j
}

pub fn c_recent_offset(n: usize) -> usize {
    match n {
        0 => 0,
        1 => 1,
        _ => 3 + 3 * (n - 2),
    }
}

pub fn c_old_index(j: usize, n: usize) -> usize {
    debug_assert!(n >= 3 && j + 3 <= n);
    (n - 3) * (n - 2) / 2 + j
}

impl GsParams {
    /// Zero corrections on the given stick-breaking logits.
    pub fn zeros(theta: ThetaLogits) -> Self {
        let [n, _, _, a_off, c_recent, c_old] = group_sizes(theta.0.len());
        Self {
            theta,
            xi: vec![0.0; n],
            a_diag: vec![0.0; n],
            a_off: vec![0.0; a_off],
            c_recent: vec![0.0; c_recent],
            c_old: vec![0.0; c_old],
        }
    }

    /// Zero corrections on a grid whose interior points lie above `delta`.
    pub fn from_grid(grid: &TimeGrid, delta: f64) -> Result<Self> {
        Ok(Self::zeros(stickbreak_inverse(grid, delta)?))
    }

    pub fn steps(&self) -> usize {
        self.theta.0.len()
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(param_count(self.steps()));
        for g in self.groups() {
            out.extend_from_slice(g);
        }
        out
    }

    pub fn groups(&self) -> [&[f64]; 6] {
        [&self.theta.0, &self.xi, &self.a_diag, &self.a_off, &self.c_recent, &self.c_old]
    }

    pub fn from_flat(n: usize, flat: &[f64]) -> Result<Self> {
        if n == 0 {
            return Err(Error::Argument("solver needs N >= 1"));
        }
        let expected = param_count(n);
        if flat.len() != expected {
            return Err(Error::Length {
                expected,
                got: flat.len(),
            });
        }
        let mut off = 0;
        let mut take = |len: usize| {
            let v = flat[off..off + len].to_vec();
            off += len;
            v
        };
        let [a, b, c, d, e, f] = group_sizes(n);
        Ok(Self {
            theta: ThetaLogits(take(a)),
            xi: take(b),
            a_diag: take(c),
            a_off: take(d),
            c_recent: take(e),
            c_old: take(f),
        })
    }

    /// Checks every group length against `steps()`.
    pub fn validate(&self) -> Result<()> {
        let n = self.steps();
        if n == 0 {
            return Err(Error::Argument("solver needs N >= 1"));
        }
        for (g, want) in self.groups().iter().zip(group_sizes(n)) {
            if g.len() != want {
                return Err(Error::Length {
                    expected: want,
                    got: g.len(),
                });
            }
        }
        Ok(())
    }

    pub fn grid(&self, schedule: &NoiseSchedule) -> Result<TimeGrid> {
        stickbreak_grid(&self.theta, schedule.t_max, schedule.delta)
    }
}

/// Zero corrections over the time-uniform initial grid.
pub fn init_params(n: usize, schedule: &NoiseSchedule) -> Result<GsParams> {
    Ok(GsParams::zeros(init_logits(n, schedule.t_max, schedule.delta)?))
}

/// Model evaluation time `clamp(t_j + xi_j, delta, T)`.
pub fn eval_time(schedule: &NoiseSchedule, t: f64, xi: f64) -> f64 {
    (t + xi).clamp(schedule.delta, schedule.t_max)
}

/// Advance `traj` from `t_n` to `t_{n+1}` on the grid of `params`.
///
/// Evaluates the data prediction at the latest point if missing, at the
/// shifted time `t_n + xi_n`.
pub fn gs_step(
    model: &MixtureModel,
    schedule: &NoiseSchedule,
    traj: &mut Trajectory,
    params: &GsParams,
    n: usize,
) -> Result<Vec<f64>> {
    params.validate()?;
    let grid = params.grid(schedule)?;
    step_on_grid(model, schedule, traj, params, grid.steps(), n)
}

fn step_on_grid(
    model: &MixtureModel,
    schedule: &NoiseSchedule,
    traj: &mut Trajectory,
    params: &GsParams,
    g: &[f64],
    n: usize,
) -> Result<Vec<f64>> {
    if n >= params.steps() {
        return Err(Error::Argument("step index beyond the solver's grid"));
    }
    if traj.points.len() != n + 1 || traj.evals.len() + 1 < traj.points.len() {
        return Err(Error::State("trajectory must hold points 0..=n and evaluations 0..n"));
    }
    if traj.evals.len() == n {
        let te = eval_time(schedule, g[n], params.xi[n]);
        let e = model.data_prediction_at(schedule, &traj.points[n], te);
        traj.evals.push(e);
    }
    let lam = |i: usize| schedule.log_snr_unchecked(g[i]);
    let h = lam(n + 1) - lam(n);
    let psi1 = math::expm1(-h);
    let (alpha_next, sigma_next) = schedule.alpha_sigma_unchecked(g[n + 1]);
    let (_, sigma_cur) = schedule.alpha_sigma_unchecked(g[n]);
    let cr = &params.c_recent[c_recent_offset(n)..];
    let a = sigma_next / sigma_cur + params.a_diag[n];
    let c1 = alpha_next * psi1 + cr[0];
    let x_n = &traj.points[n];
    let e = &traj.evals;
    let mut x: Vec<f64> = x_n.iter().zip(&e[n]).map(|(xi, ei)| a * xi - c1 * ei).collect();
    if n == 1 {
        let r0 = (lam(n) - lam(n - 1)) / h;
        let inv_r0 = 1.0 / r0;
        let c = alpha_next * psi1 / 2.0 + cr[1];
        for i in 0..x.len() {
            let d1_0 = (e[n][i] - e[n - 1][i]) * inv_r0;
            x[i] -= c * d1_0;
        }
    } else if n >= 2 {
        let r0 = (lam(n) - lam(n - 1)) / h;
        let r1 = (lam(n - 1) - lam(n - 2)) / h;
        let psi2 = psi1 / h + 1.0;
        let psi3 = psi2 / h - 0.5;
        let (inv_r0, inv_r1) = (1.0 / r0, 1.0 / r1);
        let w1 = r0 / (r0 + r1);
        let w2 = 1.0 / (r0 + r1);
        let c2 = alpha_next * psi2 + cr[1];
        let c3 = alpha_next * psi3 + cr[2];
        for i in 0..x.len() {
            let d1_0 = (e[n][i] - e[n - 1][i]) * inv_r0;
            let d1_1 = (e[n - 1][i] - e[n - 2][i]) * inv_r1;
            let dd = d1_0 - d1_1;
            let d1 = d1_0 + dd * w1;
            let d2 = dd * w2;
            x[i] = x[i] + d1 * c2 - d2 * c3;
        }
    }
    for j in 0..n {
        let w = params.a_off[a_off_index(j, n)];
        for (xi, pj) in x.iter_mut().zip(&traj.points[j]) {
            *xi += pj * w;
        }
    }
    for j in 0..n.saturating_sub(2) {
        let w = params.c_old[c_old_index(j, n)];
        for (xi, ej) in x.iter_mut().zip(&e[j]) {
            *xi += ej * w;
        }
    }
    Ok(x)
}

/// `Phi^S(x_T)`: the full rollout over `stickbreak_grid(theta)`.
pub fn gs_rollout(model: &MixtureModel, schedule: &NoiseSchedule, params: &GsParams, x_t: &[f64]) -> Result<Vec<f64>> {
    params.validate()?;
    if x_t.len() != model.dim() {
        return Err(Error::Length {
            expected: model.dim(),
            got: x_t.len(),
        });
    }
    let grid = params.grid(schedule)?;
    let g = grid.steps();
    let mut traj = Trajectory::start(x_t.to_vec(), g[0]);
    for n in 0..params.steps() {
        let x = step_on_grid(model, schedule, &mut traj, params, g, n)?;
        traj.push(x, g[n + 1]);
    }
    Ok(traj.points.pop().unwrap_or_default())
}

fn schedule_nodes(tape: &mut Tape, schedule: &NoiseSchedule, t: Var) -> (Var, Var, Var) {
    let tv = tape.scalar_value(t);
    let (a, s) = schedule.alpha_sigma_unchecked(tv);
    let (da, ds) = schedule.alpha_sigma_dot(tv);
    let alpha = tape.custom(&[(t, &[da])], &[a]);
    let sigma = tape.custom(&[(t, &[ds])], &[s]);
    let lam = tape.custom(&[(t, &[schedule.log_snr_dot(tv)])], &[schedule.log_snr_unchecked(tv)]);
    (alpha, sigma, lam)
}

fn data_prediction_node(tape: &mut Tape, model: &MixtureModel, schedule: &NoiseSchedule, x: Var, t: Var) -> Var {
    let tv = tape.scalar_value(t);
    let (value, jx, jt) = model.data_prediction_jacobians(schedule, tape.value(x), tv);
    tape.custom(&[(x, &jx), (t, &jt)], &value)
}

/// Records the rollout of `x_t` on `tape`; `flat` is a node holding the
/// flattened parameters of an `n`-step solver. Returns the endpoint node.
///
/// The arithmetic mirrors [`gs_rollout`] operation for operation, so the
/// recorded endpoint equals it bitwise.
pub fn record_rollout(
    tape: &mut Tape,
    model: &MixtureModel,
    schedule: &NoiseSchedule,
    flat: Var,
    n: usize,
    x_t: &[f64],
) -> Result<Var> {
    if n == 0 || tape.dim(flat) != param_count(n) {
        return Err(Error::Length {
            expected: param_count(n),
            got: tape.dim(flat),
        });
    }
    if x_t.len() != model.dim() {
        return Err(Error::Length {
            expected: model.dim(),
            got: x_t.len(),
        });
    }
    let sizes = group_sizes(n);
    let mut base = [0usize; 6];
    for k in 1..6 {
        base[k] = base[k - 1] + sizes[k - 1];
    }
    let [b_theta, b_xi, b_ad, b_ao, b_cr, b_co] = base;
    let (t_max, delta) = (schedule.t_max, schedule.delta);

    let mut times = Vec::with_capacity(n + 1);
    times.push(tape.constant(t_max));
    let mut prod: Option<Var> = None;
    for k in 0..n {
        let th = tape.index(flat, b_theta + k);
        let s = tape.sigmoid(th);
        let p = match prod {
            None => s,
            Some(p) => tape.mul(p, s),
        };
        prod = Some(p);
        times.push(tape.affine(p, t_max - delta, delta));
    }
    let sched: Vec<(Var, Var, Var)> = times.iter().map(|&t| schedule_nodes(tape, schedule, t)).collect();
    let one = tape.constant(1.0);

    let mut points = vec![tape.leaf(x_t)];
    let mut evals: Vec<Var> = Vec::with_capacity(n);
    for step in 0..n {
        let xi = tape.index(flat, b_xi + step);
        let shifted = tape.add(times[step], xi);
        let te = tape.clamp(shifted, delta, t_max);
        evals.push(data_prediction_node(tape, model, schedule, points[step], te));

        let lam = |i: usize| sched[i].2;
        let h = tape.sub(lam(step + 1), lam(step));
        let neg_h = tape.neg(h);
        let psi1 = tape.expm1(neg_h);
        let (alpha_next, sigma_next, _) = sched[step + 1];
        let sigma_cur = sched[step].1;
        let cr = b_cr + c_recent_offset(step);
        let ratio = tape.div(sigma_next, sigma_cur);
        let ad = tape.index(flat, b_ad + step);
        let a = tape.add(ratio, ad);
        let ap = tape.mul(alpha_next, psi1);
        let c0 = tape.index(flat, cr);
        let c1 = tape.add(ap, c0);
        let ax = tape.scale(points[step], a);
        let ce = tape.scale(evals[step], c1);
        let mut x = tape.sub(ax, ce);
        if step >= 1 {
            let dl0 = tape.sub(lam(step), lam(step - 1));
            let r0 = tape.div(dl0, h);
            let inv_r0 = tape.div(one, r0);
            let diff0 = tape.sub(evals[step], evals[step - 1]);
            let d1_0 = tape.scale(diff0, inv_r0);
            if step == 1 {
                let half = tape.affine(ap, 0.5, 0.0);
                let corr = tape.index(flat, cr + 1);
                let c = tape.add(half, corr);
                let term = tape.scale(d1_0, c);
                x = tape.sub(x, term);
            } else {
                let dl1 = tape.sub(lam(step - 1), lam(step - 2));
                let r1 = tape.div(dl1, h);
                let q = tape.div(psi1, h);
                let psi2 = tape.affine(q, 1.0, 1.0);
                let q = tape.div(psi2, h);
                let psi3 = tape.affine(q, 1.0, -0.5);
                let inv_r1 = tape.div(one, r1);
                let rs = tape.add(r0, r1);
                let w1 = tape.div(r0, rs);
                let w2 = tape.div(one, rs);
                let ap2 = tape.mul(alpha_next, psi2);
                let k1 = tape.index(flat, cr + 1);
                let c2 = tape.add(ap2, k1);
                let ap3 = tape.mul(alpha_next, psi3);
                let k2 = tape.index(flat, cr + 2);
                let c3 = tape.add(ap3, k2);
                let diff1 = tape.sub(evals[step - 1], evals[step - 2]);
                let d1_1 = tape.scale(diff1, inv_r1);
                let dd = tape.sub(d1_0, d1_1);
                let dw = tape.scale(dd, w1);
                let d1 = tape.add(d1_0, dw);
                let d2 = tape.scale(dd, w2);
                let t1 = tape.scale(d1, c2);
                let t2 = tape.scale(d2, c3);
                let s = tape.add(x, t1);
                x = tape.sub(s, t2);
            }
        }
        for j in 0..step {
            let w = tape.index(flat, b_ao + a_off_index(j, step));
            let term = tape.scale(points[j], w);
            x = tape.add(x, term);
        }
        for j in 0..step.saturating_sub(2) {
            let w = tape.index(flat, b_co + c_old_index(j, step));
            let term = tape.scale(evals[j], w);
            x = tape.add(x, term);
        }
        points.push(x);
    }
    Ok(points[n])
}
