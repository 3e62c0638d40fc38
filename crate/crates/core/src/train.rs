//! Distillation (GS) and adversarial (GAS) training of solver parameters.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::disc::{self, Discriminator};
use crate::error::{Error, Result};
use crate::gs::{gs_rollout, init_params, param_count, record_rollout, GsParams};
use crate::math;
use crate::mixture::MixtureModel;
use crate::optim::{adam_step, clip_grad_norm, ema_update, AdamConfig, AdamState, EmaState};
use crate::rng::{gaussian_rows, stream, Purpose};
use crate::schedule::NoiseSchedule;
use crate::solver::{teacher_rollout, TeacherConfig};
use crate::tape::{Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Distance {
    L2,
    L1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Gs,
    Gas,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub mode: Mode,
    /// Student step count `N`.
    pub steps: usize,
    pub lr: f64,
    pub disc_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub weight_decay: f64,
    pub ema_decay: f64,
    pub clip_norm: f64,
    pub w_adv: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub batch_size: usize,
    pub iterations: usize,
    pub seed: u64,
    pub distance: Distance,
    /// Start the discriminator from all-zero weights instead of the uniform init.
    pub disc_zero_init: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Gs,
            steps: 4,
            lr: 1e-3,
            disc_lr: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            weight_decay: 0.0,
            ema_decay: 0.999,
            clip_norm: 1.0,
            w_adv: 1.0,
            lambda1: 0.1,
            lambda2: 0.1,
            batch_size: 24,
            iterations: 2000,
            seed: 0,
            distance: Distance::L2,
            disc_zero_init: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !(self.disc_lr > 0.0) {
            return Err(Error::Argument("learning rates must be positive"));
        }
        let unit = |v: f64| v > 0.0 && v < 1.0;
        if !unit(self.beta1) || !unit(self.beta2) {
            return Err(Error::Argument("adam betas must lie in (0, 1)"));
        }
        if !(self.ema_decay >= 0.0 && self.ema_decay < 1.0) {
            return Err(Error::Argument("ema decay must lie in [0, 1)"));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::Argument("clip norm must be positive"));
        }
        if !(self.w_adv >= 0.0) || !(self.lambda1 >= 0.0) || !(self.lambda2 >= 0.0) {
            return Err(Error::Argument("loss weights must be non-negative"));
        }
        if self.batch_size == 0 || self.steps == 0 {
            return Err(Error::Argument("batch size and step count must be positive"));
        }
        Ok(())
    }

    fn solver_adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: 1e-8,
            weight_decay: self.weight_decay,
        }
    }

    fn disc_adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.disc_lr,
            ..self.solver_adam()
        }
    }
}

/// Paired prior draws and teacher endpoints.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub x_t: Vec<Vec<f64>>,
    pub x_0: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.x_t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x_t.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x_t.first().map_or(0, |r| r.len())
    }

    /// Rows `range` as a new dataset.
    pub fn slice(&self, range: core::ops::Range<usize>) -> Self {
        Self {
            x_t: self.x_t[range.clone()].to_vec(),
            x_0: self.x_0[range].to_vec(),
        }
    }

    fn validate(&self, d: usize) -> Result<()> {
        if self.is_empty() {
            return Err(Error::Argument("dataset is empty"));
        }
        if self.x_t.len() != self.x_0.len() {
            return Err(Error::Length {
                expected: self.x_t.len(),
                got: self.x_0.len(),
            });
        }
        for r in self.x_t.iter().chain(&self.x_0) {
            if r.len() != d {
                return Err(Error::Length { expected: d, got: r.len() });
            }
        }
        Ok(())
    }
}

/// Prior draws `x_T ~ N(0, sigma_T^2 I)`.
pub fn sample_prior(schedule: &NoiseSchedule, d: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let (_, sigma) = schedule.alpha_sigma_unchecked(schedule.t_max);
    gaussian_rows(&mut stream(seed, Purpose::Prior, 0), count, d, sigma)
}

/// `count` prior draws pushed through the teacher.
pub fn teacher_dataset(
    model: &MixtureModel,
    schedule: &NoiseSchedule,
    teacher: &TeacherConfig,
    count: usize,
    seed: u64,
) -> Result<Dataset> {
    let x_t = sample_prior(schedule, model.dim(), count, seed);
    let x_0 = x_t
        .iter()
        .map(|x| teacher_rollout(model, schedule, teacher, x))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { x_t, x_0 })
}

/// Mean over all elements of `|diff|` (L1) or `diff^2` (L2).
pub fn distill_loss(student: &[Vec<f64>], teacher: &[Vec<f64>], kind: Distance) -> Result<f64> {
    if student.len() != teacher.len() || student.is_empty() {
        return Err(Error::Argument("distillation batches must be non-empty and equally sized"));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for (a, b) in student.iter().zip(teacher) {
        if a.len() != b.len() {
            return Err(Error::Argument("distillation samples differ in dimension"));
        }
        for (x, y) in a.iter().zip(b) {
            let r = x - y;
            total += match kind {
                Distance::L2 => r * r,
                Distance::L1 => r.abs(),
            };
        }
        count += a.len();
    }
    Ok(total / count as f64)
}

/// `f(t) = -log(1 + e^{-t})`.
pub fn relativistic_f(t: f64) -> f64 {
    -math::softplus(-t)
}

/// Mean of `f(D(fake_i) - D(real_i))` over paired draws.
pub fn adv_loss(disc: &Discriminator, fake: &[Vec<f64>], real: &[Vec<f64>]) -> Result<f64> {
    if fake.len() != real.len() || fake.is_empty() {
        return Err(Error::Argument("adversarial batches must be non-empty and equally sized"));
    }
    let s: f64 = fake
        .iter()
        .zip(real)
        .map(|(f, r)| relativistic_f(disc.forward(f) - disc.forward(r)))
        .sum();
    Ok(s / fake.len() as f64)
}

/// `lambda1 mean |grad D(real)|^2 + lambda2 mean |grad D(fake)|^2`.
pub fn grad_penalty(disc: &Discriminator, real: &[Vec<f64>], fake: &[Vec<f64>], lambda1: f64, lambda2: f64) -> Result<f64> {
    if real.is_empty() || fake.is_empty() {
        return Err(Error::Argument("penalty batches must be non-empty"));
    }
    let sq = |x: &Vec<f64>| {
        let g = disc.input_grad(x);
        math::dot(&g, &g)
    };
    let r: f64 = real.iter().map(sq).sum::<f64>() / real.len() as f64;
    let f: f64 = fake.iter().map(sq).sum::<f64>() / fake.len() as f64;
    Ok(lambda1 * r + lambda2 * f)
}

fn record_f(tape: &mut Tape, t: Var) -> Var {
    let n = tape.neg(t);
    let sp = tape.softplus(n);
    tape.neg(sp)
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub distill_loss: f64,
    /// Present in adversarial mode.
    pub adv_loss: Option<f64>,
    pub disc_objective: Option<f64>,
    pub grad_norm_pre_clip: f64,
}

pub type SolverBatch = (f64, f64, Vec<f64>, Vec<Vec<f64>>);

#[derive(Debug, Clone, PartialEq)]
pub struct DiscState {
    pub disc: Discriminator,
    pub adam: AdamState,
}

/// Optimizer state for one training run; [`Trainer::step`] performs one
/// solver update and, in adversarial mode, one discriminator update.
#[derive(Debug, Clone)]
pub struct Trainer<'a> {
    model: &'a MixtureModel,
    schedule: &'a NoiseSchedule,
    data: &'a Dataset,
    pub cfg: TrainConfig,
    pub params: Vec<f64>,
    pub adam: AdamState,
    pub ema: EmaState,
    pub disc: Option<DiscState>,
    pub iteration: usize,
}

impl<'a> Trainer<'a> {
    pub fn new(model: &'a MixtureModel, schedule: &'a NoiseSchedule, cfg: TrainConfig, data: &'a Dataset) -> Result<Self> {
        let init = init_params(cfg.steps, schedule)?;
        Self::with_params(model, schedule, cfg, data, &init)
    }

    pub fn with_params(
        model: &'a MixtureModel,
        schedule: &'a NoiseSchedule,
        cfg: TrainConfig,
        data: &'a Dataset,
        init: &GsParams,
    ) -> Result<Self> {
        cfg.validate()?;
        data.validate(model.dim())?;
        init.validate()?;
        if init.steps() != cfg.steps {
            return Err(Error::Argument("initial parameters do not match the configured step count"));
        }
        let params = init.flatten();
        assert_eq!(params.len(), param_count(cfg.steps));
        let d = model.dim();
        let disc = match cfg.mode {
            Mode::Gs => None,
            Mode::Gas => {
                let disc = if cfg.disc_zero_init {
                    Discriminator::zeros(d)
                } else {
                    Discriminator::random(d, &mut stream(cfg.seed, Purpose::DiscInit, 0))
                };
                let adam = AdamState::new(disc.weights.len());
                Some(DiscState { disc, adam })
            }
        };
        Ok(Self {
            model,
            schedule,
            data,
            adam: AdamState::new(params.len()),
            ema: EmaState::new(&params),
            params,
            disc,
            iteration: 0,
            cfg,
        })
    }

    pub fn current(&self) -> GsParams {
        GsParams::from_flat(self.cfg.steps, &self.params).expect("length fixed at construction")
    }

    pub fn ema_params(&self) -> GsParams {
        GsParams::from_flat(self.cfg.steps, &self.ema.shadow).expect("length fixed at construction")
    }

    fn draw(&self, purpose: Purpose) -> Vec<usize> {
        let mut rng = stream(self.cfg.seed, purpose, self.iteration as u64);
        (0..self.cfg.batch_size).map(|_| rng.random_range(0..self.data.len())).collect()
    }

    fn non_finite(&self, quantity: &'static str) -> Error {
        Error::NonFinite {
            iteration: self.iteration,
            quantity,
        }
    }

    /// `(distill_loss, total_loss, gradient, student endpoints)` for explicit
    /// batch indices.
    pub fn solver_loss_and_grad(&self, batch: &[usize], real: &[usize]) -> Result<SolverBatch> {
        let b = batch.len() as f64;
        let d = self.model.dim();
        let mut grad = vec![0.0; self.params.len()];
        let mut distill = 0.0;
        let mut total = 0.0;
        let mut fakes = Vec::with_capacity(batch.len());
        let adversarial = self.disc.as_ref().filter(|_| self.cfg.w_adv != 0.0);
        for (k, &i) in batch.iter().enumerate() {
            let mut tape = Tape::new();
            let flat = tape.leaf(&self.params);
            let end = record_rollout(&mut tape, self.model, self.schedule, flat, self.cfg.steps, &self.data.x_t[i])?;
            let target = tape.leaf(&self.data.x_0[i]);
            let diff = tape.sub(end, target);
            let per = match self.cfg.distance {
                Distance::L2 => tape.sum_sq(diff),
                Distance::L1 => {
                    let a = tape.abs(diff);
                    tape.sum(a)
                }
            };
            let dl = tape.affine(per, 1.0 / (b * d as f64), 0.0);
            distill += tape.scalar_value(dl);
            let loss = match adversarial {
                None => dl,
                Some(ds) => {
                    let w = tape.leaf(&ds.disc.weights);
                    let d_fake = disc::record(&mut tape, d, w, end);
                    let d_real = ds.disc.forward(&self.data.x_0[real[k]]);
                    let arg = tape.affine(d_fake, 1.0, -d_real);
                    let f = record_f(&mut tape, arg);
                    let adv = tape.affine(f, self.cfg.w_adv / b, 0.0);
                    tape.add(dl, adv)
                }
            };
            total += tape.scalar_value(loss);
            let g = tape.backward(loss)?;
            for (acc, v) in grad.iter_mut().zip(g.wrt(flat)) {
                *acc += v;
            }
            fakes.push(tape.value(end).to_vec());
        }
        Ok((distill, total, grad, fakes))
    }

    /// Discriminator objective `adv - penalty` on fixed samples and its
    /// gradient in the discriminator weights.
    pub fn disc_objective_and_grad(disc: &Discriminator, fake: &[Vec<f64>], real: &[Vec<f64>], lambda1: f64, lambda2: f64) -> Result<(f64, f64, Vec<f64>)> {
        let b = fake.len() as f64;
        let d = disc.dim();
        let mut grad = vec![0.0; disc.weights.len()];
        let mut objective = 0.0;
        let mut adv = 0.0;
        for (f, r) in fake.iter().zip(real) {
            let mut tape = Tape::new();
            let w = tape.leaf(&disc.weights);
            let xf = tape.leaf(f);
            let xr = tape.leaf(r);
            let df = disc::record(&mut tape, d, w, xf);
            let dr = disc::record(&mut tape, d, w, xr);
            let arg = tape.sub(df, dr);
            let fv = record_f(&mut tape, arg);
            adv += tape.scalar_value(fv) / b;
            let gr = tape.grad_of_input(dr, xr)?;
            let gf = tape.grad_of_input(df, xf)?;
            let pr = tape.sum_sq(gr);
            let pf = tape.sum_sq(gf);
            let pr = tape.affine(pr, lambda1, 0.0);
            let pf = tape.affine(pf, lambda2, 0.0);
            let pen = tape.add(pr, pf);
            let j = tape.sub(fv, pen);
            let j = tape.affine(j, 1.0 / b, 0.0);
            objective += tape.scalar_value(j);
            let g = tape.backward(j)?;
            for (acc, v) in grad.iter_mut().zip(g.wrt(w)) {
                *acc += v;
            }
        }
        Ok((objective, adv, grad))
    }

    pub fn step(&mut self) -> Result<IterationRecord> {
        let batch = self.draw(Purpose::Batch);
        let real = if self.disc.is_some() {
            self.draw(Purpose::RealBatch)
        } else {
            Vec::new()
        };
        let (distill, total, mut grad, fakes) = self.solver_loss_and_grad(&batch, &real)?;
        if !distill.is_finite() || !total.is_finite() {
            return Err(self.non_finite("loss"));
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(self.non_finite("gradient"));
        }
        let norm = clip_grad_norm(&mut grad, self.cfg.clip_norm)?;
        let mut adv_loss = None;
        let mut disc_objective = None;
        if let Some(ds) = self.disc.as_mut() {
            let reals: Vec<Vec<f64>> = real.iter().map(|&i| self.data.x_0[i].clone()).collect();
            let (obj, adv, mut dg) =
                Self::disc_objective_and_grad(&ds.disc, &fakes, &reals, self.cfg.lambda1, self.cfg.lambda2)?;
            if !obj.is_finite() || dg.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite {
                    iteration: self.iteration,
                    quantity: "discriminator objective",
                });
            }
            for g in &mut dg {
                *g = -*g;
            }
            adam_step(&mut ds.disc.weights, &dg, &mut ds.adam, &self.cfg.disc_adam())?;
            adv_loss = Some(adv);
            disc_objective = Some(obj);
        }
        adam_step(&mut self.params, &grad, &mut self.adam, &self.cfg.solver_adam())?;
        ema_update(&mut self.ema, &self.params, self.cfg.ema_decay)?;
        let rec = IterationRecord {
            iteration: self.iteration,
            distill_loss: distill,
            adv_loss,
            disc_objective,
            grad_norm_pre_clip: norm,
        };
        self.iteration += 1;
        Ok(rec)
    }

    pub fn run(&mut self) -> Result<Vec<IterationRecord>> {
        let mut log = Vec::with_capacity(self.cfg.iterations);
        while self.iteration < self.cfg.iterations {
            log.push(self.step()?);
        }
        Ok(log)
    }
}

/// Distillation-only training; returns the EMA parameters and the log.
pub fn train_gs(model: &MixtureModel, schedule: &NoiseSchedule, cfg: &TrainConfig, data: &Dataset) -> Result<(GsParams, Vec<IterationRecord>)> {
    let cfg = TrainConfig {
        mode: Mode::Gs,
        ..cfg.clone()
    };
    let mut t = Trainer::new(model, schedule, cfg, data)?;
    let log = t.run()?;
    Ok((t.ema_params(), log))
}

/// Distillation plus relativistic adversarial training.
pub fn train_gas(
    model: &MixtureModel,
    schedule: &NoiseSchedule,
    cfg: &TrainConfig,
    data: &Dataset,
) -> Result<(GsParams, Discriminator, Vec<IterationRecord>)> {
    let cfg = TrainConfig {
        mode: Mode::Gas,
        ..cfg.clone()
    };
    let mut t = Trainer::new(model, schedule, cfg, data)?;
    let log = t.run()?;
    let disc = t.disc.take().map(|s| s.disc).expect("adversarial mode owns a discriminator");
    Ok((t.ema_params(), disc, log))
}

/// Student endpoints for every prior draw in `data`.
pub fn student_outputs(model: &MixtureModel, schedule: &NoiseSchedule, params: &GsParams, data: &Dataset) -> Result<Vec<Vec<f64>>> {
    data.x_t.iter().map(|x| gs_rollout(model, schedule, params, x)).collect()
}
