//! CSV emission for training logs, evaluations, order checks and sweeps.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use gasolve_core::train::IterationRecord;

use crate::error::{CliError, Result};

pub const METRICS_COLUMNS: [&str; 6] = ["iteration", "distill_loss", "adv_loss", "disc_objective", "grad_norm_pre_clip", "wallclock_ms"];

pub const EVAL_COLUMNS: [&str; 9] = [
    "iteration",
    "distill_loss",
    "adv_loss",
    "disc_objective",
    "grad_norm_pre_clip",
    "wallclock_ms",
    "endpoint_error",
    "energy_distance",
    "w2_gaussian",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row of the evaluation report.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub iteration: usize,
    pub distill_loss: f64,
    pub endpoint_error: f64,
    pub energy_distance: f64,
    pub w2_gaussian: Option<f64>,
}

/// Incremental writer for the per-iteration training log. Every field is
/// numeric or empty, so rows need no quoting.
pub struct MetricsWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl MetricsWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| CliError::io(path, e))?;
        let mut w = Self {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        };
        w.line(&METRICS_COLUMNS.join(","))?;
        Ok(w)
    }

    fn line(&mut self, text: &str) -> Result<()> {
        writeln!(self.out, "{text}").map_err(|e| CliError::io(&self.path, e))
    }

    pub fn push(&mut self, r: &IterationRecord, wallclock_ms: Option<f64>) -> Result<()> {
        let row = [
            r.iteration.to_string(),
            r.distill_loss.to_string(),
            opt(r.adv_loss),
            opt(r.disc_objective),
            r.grad_norm_pre_clip.to_string(),
            opt(wallclock_ms),
        ];
        self.line(&row.join(","))
    }

    /// Appends a `# ...` diagnostic line, used when a run aborts.
    pub fn diagnostic(&mut self, message: &str) -> Result<()> {
        self.line(&format!("# {message}"))
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|e| CliError::io(&self.path, e))
    }
}

pub fn write_eval(path: &Path, rows: &[EvalRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::io(path, e))?;
    let io = |e: csv::Error| CliError::io(path, e);
    w.write_record(EVAL_COLUMNS).map_err(io)?;
    for r in rows {
        w.write_record([
            r.iteration.to_string(),
            r.distill_loss.to_string(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            r.endpoint_error.to_string(),
            r.energy_distance.to_string(),
            opt(r.w2_gaussian),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Writes a header and string rows.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::io(path, e))?;
    let io = |e: csv::Error| CliError::io(path, e);
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(r).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}
