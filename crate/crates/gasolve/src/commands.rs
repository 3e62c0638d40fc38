//! Subcommand implementations. Each writes its artifact into an output
//! directory and returns the path it wrote.

use std::path::{Path, PathBuf};
use std::time::Instant;

use gasolve_core::gs::{init_params, GsParams};
use gasolve_core::math;
use gasolve_core::metrics::{convergence_order, endpoint_error, energy_distance, moments, w2_gaussian};
use gasolve_core::mixture::MixtureModel;
use gasolve_core::schedule::NoiseSchedule;
use gasolve_core::solver::SolverKind;
use gasolve_core::train::{distill_loss, sample_prior, student_outputs, teacher_dataset, Dataset, Mode, TrainConfig, Trainer};

use crate::checkpoint::Checkpoint;
use crate::config::{solver_name, Config};
use crate::dataset::DatasetFile;
use crate::error::{CliError, Result};
use crate::report::{write_eval, write_table, EvalRow, MetricsWriter};

pub const DATASET_FILE: &str = "dataset.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.txt";
pub const METRICS_FILE: &str = "metrics.csv";
pub const EVAL_FILE: &str = "eval.csv";
pub const ORDER_FILE: &str = "order.csv";
pub const SWEEP_FILE: &str = "sweep.csv";

pub fn problem(cfg: &Config) -> Result<(MixtureModel, NoiseSchedule)> {
    Ok((cfg.mixture()?, cfg.schedule()?))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn generate_dataset(cfg: &Config) -> Result<DatasetFile> {
    let (model, schedule) = problem(cfg)?;
    let teacher = cfg.teacher()?;
    let (train, val) = cfg.data_sizes()?;
    let seed = cfg.seed()?;
    let data = teacher_dataset(&model, &schedule, &teacher, train + val, seed)?;
    Ok(DatasetFile { seed, teacher, data })
}

pub fn teacher(cfg: &Config, out: &Path) -> Result<PathBuf> {
    let file = generate_dataset(cfg)?;
    ensure_dir(out)?;
    let path = out.join(DATASET_FILE);
    file.save(&path)?;
    Ok(path)
}

/// Training rows first, validation rows after them.
pub fn splits(cfg: &Config, file: &DatasetFile, d: usize) -> Result<(Dataset, Dataset)> {
    if file.dim() != d {
        return Err(CliError::Dimension {
            key: "problem.d".into(),
            expected: d,
            got: file.dim(),
        });
    }
    let (train, val) = cfg.data_sizes()?;
    if file.data.len() < train + val {
        return Err(CliError::Dataset(format!(
            "{} rows, but data.train + data.val = {}",
            file.data.len(),
            train + val
        )));
    }
    Ok((file.data.slice(0..train), file.data.slice(train..train + val)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub checkpoint: PathBuf,
    pub metrics: PathBuf,
    pub iterations: usize,
}

/// Runs training from `init` and returns the final trainer state as a
/// checkpoint, streaming the log into `metrics`.
pub fn run_training(
    cfg: &Config,
    train_cfg: TrainConfig,
    model: &MixtureModel,
    schedule: &NoiseSchedule,
    data: &Dataset,
    init: &GsParams,
    metrics: &Path,
) -> Result<Checkpoint> {
    let mut trainer = Trainer::with_params(model, schedule, train_cfg, data, init)?;
    let mut log = MetricsWriter::create(metrics)?;
    let start = Instant::now();
    while trainer.iteration < trainer.cfg.iterations {
        match trainer.step() {
            Ok(rec) => log.push(&rec, Some(start.elapsed().as_secs_f64() * 1e3))?,
            Err(e) => {
                let e = CliError::from(e);
                log.diagnostic(&format!("aborted: {e}"))?;
                log.finish()?;
                return Err(e);
            }
        }
    }
    log.finish()?;
    Ok(Checkpoint::from_trainer(&trainer, model.dim(), cfg))
}

pub fn train(cfg: &Config, data_path: &Path, out: &Path) -> Result<TrainOutcome> {
    let (model, schedule) = problem(cfg)?;
    let train_cfg = cfg.train()?;
    let file = DatasetFile::load(data_path)?;
    let (train, _) = splits(cfg, &file, model.dim())?;
    ensure_dir(out)?;
    let metrics = out.join(METRICS_FILE);
    let init = init_params(train_cfg.steps, &schedule)?;
    let iterations = train_cfg.iterations;
    let ckpt = run_training(cfg, train_cfg, &model, &schedule, &train, &init, &metrics)?;
    let checkpoint = out.join(CHECKPOINT_FILE);
    ckpt.save(&checkpoint)?;
    Ok(TrainOutcome {
        checkpoint,
        metrics,
        iterations,
    })
}

/// Exact law of the PF-ODE pushforward of the prior for one Gaussian
/// component, as per-coordinate mean and variance.
pub fn gaussian_pushforward(model: &MixtureModel, schedule: &NoiseSchedule) -> Option<(Vec<f64>, Vec<f64>)> {
    let [c] = model.components() else {
        return None;
    };
    let (t, delta) = (schedule.t_max, schedule.delta);
    let k = math::sqrt((c.var + delta * delta) / (c.var + t * t));
    let mean = c.mean.iter().map(|m| m * (1.0 - k)).collect();
    Some((mean, vec![k * k * t * t; c.mean.len()]))
}

/// Scores the EMA parameters of `ckpt` on `val`.
pub fn evaluate(model: &MixtureModel, schedule: &NoiseSchedule, ckpt: &Checkpoint, val: &Dataset) -> Result<EvalRow> {
    let student = student_outputs(model, schedule, &ckpt.ema, val)?;
    let w2 = match gaussian_pushforward(model, schedule) {
        Some((mu, var)) => {
            let (m, v) = moments(&student);
            Some(w2_gaussian(&m, &v, &mu, &var)?)
        }
        None => None,
    };
    Ok(EvalRow {
        iteration: ckpt.iteration,
        distill_loss: distill_loss(&student, &val.x_0, gasolve_core::train::Distance::L2)?,
        endpoint_error: endpoint_error(&student, &val.x_0)?,
        energy_distance: energy_distance(&student, &val.x_0)?,
        w2_gaussian: w2,
    })
}

pub fn eval(cfg: &Config, ckpt_path: &Path, data_path: &Path, out: &Path) -> Result<PathBuf> {
    let (model, schedule) = problem(cfg)?;
    let ckpt = Checkpoint::load(ckpt_path)?;
    if ckpt.dim != model.dim() {
        return Err(CliError::Dimension {
            key: "problem.d".into(),
            expected: model.dim(),
            got: ckpt.dim,
        });
    }
    let file = DatasetFile::load(data_path)?;
    let (_, val) = splits(cfg, &file, model.dim())?;
    let row = evaluate(&model, &schedule, &ckpt, &val)?;
    ensure_dir(out)?;
    let path = out.join(EVAL_FILE);
    write_eval(&path, &[row])?;
    Ok(path)
}

pub fn order_check(cfg: &Config, out: &Path) -> Result<PathBuf> {
    let (model, schedule) = problem(cfg)?;
    let steps = cfg.order_steps()?;
    let x_t = sample_prior(&schedule, model.dim(), 1, cfg.seed()?).remove(0);
    let mut rows = Vec::new();
    for kind in [SolverKind::Euler, SolverKind::Dpmpp3m, SolverKind::Rk4] {
        let est = convergence_order(kind, &model, &schedule, &x_t, &steps)?;
        for (n, e) in est.steps.iter().zip(&est.errors) {
            rows.push(vec![
                solver_name(kind).to_string(),
                n.to_string(),
                e.to_string(),
                est.order.to_string(),
                est.residual.to_string(),
            ]);
        }
    }
    ensure_dir(out)?;
    let path = out.join(ORDER_FILE);
    write_table(&path, &["solver", "steps", "error", "order", "residual"], &rows)?;
    Ok(path)
}

/// Trains one adversarial run per `sweep.w_adv` entry and evaluates each.
/// Per-run logs go to `metrics_w<index>.csv`.
pub fn sweep(cfg: &Config, data_path: &Path, out: &Path) -> Result<PathBuf> {
    let (model, schedule) = problem(cfg)?;
    let base = cfg.train()?;
    let file = DatasetFile::load(data_path)?;
    let (train, val) = splits(cfg, &file, model.dim())?;
    ensure_dir(out)?;
    let init = init_params(base.steps, &schedule)?;
    let mut rows = Vec::new();
    for (i, w) in cfg.sweep_weights()?.into_iter().enumerate() {
        let run = TrainConfig {
            mode: Mode::Gas,
            w_adv: w,
            ..base.clone()
        };
        let metrics = out.join(format!("metrics_w{i}.csv"));
        let ckpt = run_training(cfg, run, &model, &schedule, &train, &init, &metrics)?;
        let row = evaluate(&model, &schedule, &ckpt, &val)?;
        rows.push(vec![
            w.to_string(),
            row.endpoint_error.to_string(),
            row.energy_distance.to_string(),
            row.distill_loss.to_string(),
        ]);
    }
    let path = out.join(SWEEP_FILE);
    write_table(&path, &["w_adv", "endpoint_error", "energy_distance", "distill_loss"], &rows)?;
    Ok(path)
}
