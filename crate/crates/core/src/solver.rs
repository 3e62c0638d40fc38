//! Reference integrators for the probability-flow ODE.
//!
//! `dpmpp3m_step` is the third-order multistep exponential integrator in
//! data-prediction form; the generalized solver in [`crate::gs`] layers its
//! trainable corrections over exactly this update.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid::{logsnr_grid, polynomial_grid, TimeGrid};
use crate::math;
use crate::mixture::{MixtureModel, State};
use crate::schedule::NoiseSchedule;

/// History of a multistep rollout.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub points: Vec<Vec<f64>>,
    /// Data predictions at `points[j]`, `times[j]`.
    pub evals: Vec<Vec<f64>>,
    pub times: Vec<f64>,
}

impl Trajectory {
    pub fn start(x: Vec<f64>, t: f64) -> Self {
        Self {
            points: alloc::vec![x],
            evals: Vec::new(),
            times: alloc::vec![t],
        }
    }

    /// Index of the latest point.
    pub fn n(&self) -> usize {
        self.points.len() - 1
    }

    /// Evaluate the data prediction at the latest point if it is missing.
    pub fn evaluate_latest(&mut self, model: &MixtureModel, schedule: &NoiseSchedule) {
        if self.evals.len() < self.points.len() {
            let n = self.n();
            let e = model.data_prediction_at(schedule, &self.points[n], self.times[n]);
            self.evals.push(e);
        }
    }

    pub fn push(&mut self, x: Vec<f64>, t: f64) {
        self.points.push(x);
        self.times.push(t);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolverKind {
    Euler,
    Dpmpp3m,
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GridKind {
    LogSnr,
    Polynomial(f64),
}

impl GridKind {
    pub fn build(self, n: usize, schedule: &NoiseSchedule) -> Result<TimeGrid> {
        match self {
            GridKind::LogSnr => logsnr_grid(n, schedule, schedule.t_max, schedule.delta),
            GridKind::Polynomial(rho) => polynomial_grid(n, rho, schedule.t_max, schedule.delta),
        }
    }
}

/// The high-accuracy sampler whose outputs the student is distilled from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TeacherConfig {
    pub solver: SolverKind,
    /// Step count: one model evaluation per step for the multistep solvers,
    /// four per step for RK4.
    pub nfe: usize,
    pub grid: GridKind,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        Self {
            solver: SolverKind::Dpmpp3m,
            nfe: 20,
            grid: GridKind::LogSnr,
        }
    }
}

fn check_grid(schedule: &NoiseSchedule, grid: &TimeGrid) -> Result<()> {
    let s = grid.steps();
    schedule.check(s[0])?;
    schedule.check(s[s.len() - 1])
}

/// One explicit Euler step `x + (t_next - t) v(x, t)`.
pub fn euler_step(model: &MixtureModel, schedule: &NoiseSchedule, state: &State, t_next: f64) -> Result<State> {
    if t_next > state.t {
        return Err(Error::Argument("euler step must move toward smaller t"));
    }
    schedule.check(t_next)?;
    let v = model.velocity(schedule, state)?;
    let dt = t_next - state.t;
    let x = state.x.iter().zip(&v).map(|(xi, vi)| xi + dt * vi).collect();
    Ok(State::new(x, t_next))
}

pub fn euler_rollout(model: &MixtureModel, schedule: &NoiseSchedule, grid: &TimeGrid, x_t: &[f64]) -> Result<Vec<f64>> {
    check_grid(schedule, grid)?;
    let mut state = State::new(x_t.to_vec(), grid.steps()[0]);
    for &t in &grid.steps()[1..] {
        state = euler_step(model, schedule, &state, t)?;
    }
    Ok(state.x)
}

/// Advance `traj` from `grid[n]` to `grid[n + 1]`.
///
/// Uses the data predictions stored in `traj.evals`; up to the two previous
/// evaluations enter through first and second divided differences in log-SNR.
pub fn dpmpp3m_step(schedule: &NoiseSchedule, traj: &Trajectory, grid: &TimeGrid, n: usize) -> Result<Vec<f64>> {
    let g = grid.steps();
    if n + 1 >= g.len() {
        return Err(Error::Argument("grid too short for requested step"));
    }
    if traj.points.len() != n + 1 || traj.evals.len() != n + 1 {
        return Err(Error::State("trajectory must hold points and evaluations 0..=n"));
    }
    let lam = |i: usize| schedule.log_snr_unchecked(g[i]);
    let h = lam(n + 1) - lam(n);
    let psi1 = math::expm1(-h);
    let (alpha_next, sigma_next) = schedule.alpha_sigma_unchecked(g[n + 1]);
    let (_, sigma_cur) = schedule.alpha_sigma_unchecked(g[n]);
    let a = sigma_next / sigma_cur;
    let c1 = alpha_next * psi1;
    let x_n = &traj.points[n];
    let e = &traj.evals;
    let mut x: Vec<f64> = x_n.iter().zip(&e[n]).map(|(xi, ei)| a * xi - c1 * ei).collect();
    if n == 1 {
        let r0 = (lam(n) - lam(n - 1)) / h;
        let inv_r0 = 1.0 / r0;
        let c = alpha_next * psi1 / 2.0;
        for i in 0..x.len() {
            let d1_0 = inv_r0 * (e[n][i] - e[n - 1][i]);
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
        let (c2, c3) = (alpha_next * psi2, alpha_next * psi3);
        for i in 0..x.len() {
            let d1_0 = inv_r0 * (e[n][i] - e[n - 1][i]);
            let d1_1 = inv_r1 * (e[n - 1][i] - e[n - 2][i]);
            let d1 = d1_0 + w1 * (d1_0 - d1_1);
            let d2 = w2 * (d1_0 - d1_1);
            x[i] = x[i] + c2 * d1 - c3 * d2;
        }
    }
    Ok(x)
}

pub fn dpmpp3m_rollout(model: &MixtureModel, schedule: &NoiseSchedule, grid: &TimeGrid, x_t: &[f64]) -> Result<Vec<f64>> {
    check_grid(schedule, grid)?;
    let g = grid.steps();
    let mut traj = Trajectory::start(x_t.to_vec(), g[0]);
    for n in 0..grid.len() {
        traj.evaluate_latest(model, schedule);
        let x = dpmpp3m_step(schedule, &traj, grid, n)?;
        traj.push(x, g[n + 1]);
    }
    Ok(traj.points.pop().unwrap_or_default())
}

pub fn rk4_rollout(model: &MixtureModel, schedule: &NoiseSchedule, grid: &TimeGrid, x_t: &[f64]) -> Result<Vec<f64>> {
    check_grid(schedule, grid)?;
    let g = grid.steps();
    let mut x = x_t.to_vec();
    let axpy = |x: &[f64], a: f64, k: &[f64]| -> Vec<f64> { x.iter().zip(k).map(|(xi, ki)| xi + a * ki).collect() };
    for w in g.windows(2) {
        let (t, dt) = (w[0], w[1] - w[0]);
        let mid = t + 0.5 * dt;
        let k1 = model.velocity_at(schedule, &x, t);
        let k2 = model.velocity_at(schedule, &axpy(&x, 0.5 * dt, &k1), mid);
        let k3 = model.velocity_at(schedule, &axpy(&x, 0.5 * dt, &k2), mid);
        let k4 = model.velocity_at(schedule, &axpy(&x, dt, &k3), w[1]);
        for i in 0..x.len() {
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    Ok(x)
}

/// Classical RK4 on the velocity over a log-SNR-uniform grid from `T` to `delta`.
pub fn rk4_solve(model: &MixtureModel, schedule: &NoiseSchedule, x_t: &[f64], substeps: usize) -> Result<Vec<f64>> {
    let grid = logsnr_grid(substeps, schedule, schedule.t_max, schedule.delta)?;
    rk4_rollout(model, schedule, &grid, x_t)
}

pub fn rollout(kind: SolverKind, model: &MixtureModel, schedule: &NoiseSchedule, grid: &TimeGrid, x_t: &[f64]) -> Result<Vec<f64>> {
    match kind {
        SolverKind::Euler => euler_rollout(model, schedule, grid, x_t),
        SolverKind::Dpmpp3m => dpmpp3m_rollout(model, schedule, grid, x_t),
        SolverKind::Rk4 => rk4_rollout(model, schedule, grid, x_t),
    }
}

/// `Phi^T(x_T)`.
pub fn teacher_rollout(model: &MixtureModel, schedule: &NoiseSchedule, cfg: &TeacherConfig, x_t: &[f64]) -> Result<Vec<f64>> {
    if cfg.nfe == 0 {
        return Err(Error::Argument("teacher needs at least one step"));
    }
    if x_t.iter().any(|v| !v.is_finite()) {
        return Err(Error::Argument("teacher input must be finite"));
    }
    let grid = cfg.grid.build(cfg.nfe, schedule)?;
    rollout(cfg.solver, model, schedule, &grid, x_t)
}
