//! Flat `key = value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Every key must be
//! known; a key is only required by the commands that read it.

use std::collections::BTreeMap;
use std::path::Path;

use gasolve_core::mixture::{Component, MixtureModel};
use gasolve_core::schedule::NoiseSchedule;
use gasolve_core::solver::{GridKind, SolverKind, TeacherConfig};
use gasolve_core::train::{Distance, Mode, TrainConfig};

use crate::error::{CliError, Result};

pub const SCALAR_KEYS: &[&str] = &[
    "problem.d",
    "problem.t_max",
    "problem.delta",
    "teacher.solver",
    "teacher.nfe",
    "teacher.grid",
    "student.N",
    "student.mode",
    "train.lr",
    "train.disc_lr",
    "train.beta1",
    "train.beta2",
    "train.weight_decay",
    "train.ema_decay",
    "train.clip_norm",
    "train.w_adv",
    "train.lambda1",
    "train.lambda2",
    "train.batch_size",
    "train.iterations",
    "train.distance",
    "train.disc_init",
    "seed",
    "data.train",
    "data.val",
    "order.steps",
    "sweep.w_adv",
    "output.dir",
];

const COMPONENT_FIELDS: &[&str] = &["weight", "mean", "var"];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

/// Whether `key` is accepted in a config file.
pub fn is_known(key: &str) -> bool {
    if SCALAR_KEYS.contains(&key) {
        return true;
    }
    let mut parts = key.split('.');
    matches!(
        (parts.next(), parts.next(), parts.next(), parts.next()),
        (Some("mixture"), Some(k), Some(f), None) if k.parse::<usize>().is_ok() && COMPONENT_FIELDS.contains(&f)
    )
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(CliError::Syntax {
                    line: i + 1,
                    text: raw.to_string(),
                });
            };
            let (k, v) = (k.trim(), v.trim());
            if !is_known(k) {
                return Err(CliError::UnknownKey(k.to_string()));
            }
            if entries.insert(k.to_string(), v.to_string()).is_some() {
                return Err(CliError::DuplicateKey(k.to_string()));
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text)
    }

    /// Sets `key`, checking that it is known.
    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<()> {
        if !is_known(key) {
            return Err(CliError::UnknownKey(key.to_string()));
        }
        self.entries.insert(key.to_string(), value.into());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str, value: &str) -> Result<T> {
        value.parse().map_err(|_| CliError::InvalidValue {
            key: key.to_string(),
            value: value.to_string(),
        })
    }

    pub fn required<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let v = self.get(key).ok_or_else(|| CliError::MissingKey(key.to_string()))?;
        self.parsed(key, v)
    }

    pub fn or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.get(key) {
            Some(v) => self.parsed(key, v),
            None => Ok(default),
        }
    }

    fn list(&self, key: &str, value: &str) -> Result<Vec<f64>> {
        if value.is_empty() {
            return Ok(Vec::new());
        }
        value.split(',').map(|p| self.parsed(key, p.trim())).collect()
    }

    fn invalid(&self, key: &str) -> CliError {
        CliError::InvalidValue {
            key: key.to_string(),
            value: self.get(key).unwrap_or_default().to_string(),
        }
    }

    pub fn schedule(&self) -> Result<NoiseSchedule> {
        let t_max = self.or("problem.t_max", 10.0)?;
        let delta = self.or("problem.delta", 1e-3)?;
        NoiseSchedule::variance_exploding(t_max, delta).map_err(|_| self.invalid("problem.delta"))
    }

    pub fn mixture(&self) -> Result<MixtureModel> {
        let d: usize = self.required("problem.d")?;
        let mut comps = Vec::new();
        for k in 0.. {
            let key = |f: &str| format!("mixture.{k}.{f}");
            if self.get(&key("weight")).is_none() && self.get(&key("mean")).is_none() && self.get(&key("var")).is_none() {
                break;
            }
            let weight: f64 = self.required(&key("weight"))?;
            let mean_key = key("mean");
            let mean_raw = self.get(&mean_key).ok_or_else(|| CliError::MissingKey(mean_key.clone()))?;
            let mean = self.list(&mean_key, mean_raw)?;
            if mean.len() != d {
                return Err(CliError::Dimension {
                    key: mean_key,
                    expected: d,
                    got: mean.len(),
                });
            }
            let var: f64 = self.required(&key("var"))?;
            comps.push(Component { weight, mean, var });
        }
        let extra = self
            .entries
            .keys()
            .filter(|k| k.starts_with("mixture."))
            .find(|k| k.split('.').nth(1).and_then(|i| i.parse::<usize>().ok()).is_some_and(|i| i >= comps.len()));
        if let Some(k) = extra {
            return Err(CliError::MissingKey(format!("mixture components before {k}")));
        }
        if comps.is_empty() {
            return Err(CliError::MissingKey("mixture.0.weight".to_string()));
        }
        MixtureModel::new(comps).map_err(|e| CliError::Model(e.to_string()))
    }

    pub fn teacher(&self) -> Result<TeacherConfig> {
        let solver = match self.get("teacher.solver").unwrap_or("dpmpp3m") {
            "dpmpp3m" => SolverKind::Dpmpp3m,
            "rk4" => SolverKind::Rk4,
            "euler" => SolverKind::Euler,
            _ => return Err(self.invalid("teacher.solver")),
        };
        let nfe: usize = self.or("teacher.nfe", 20)?;
        if nfe == 0 {
            return Err(self.invalid("teacher.nfe"));
        }
        let grid = parse_grid(self.get("teacher.grid").unwrap_or("logsnr")).ok_or_else(|| self.invalid("teacher.grid"))?;
        Ok(TeacherConfig { solver, nfe, grid })
    }

    pub fn seed(&self) -> Result<u64> {
        self.or("seed", 0)
    }

    pub fn data_sizes(&self) -> Result<(usize, usize)> {
        Ok((self.or("data.train", 1400)?, self.or("data.val", 1000)?))
    }

    pub fn mode(&self) -> Result<Mode> {
        match self.get("student.mode").unwrap_or("gs") {
            "gs" => Ok(Mode::Gs),
            "gas" => Ok(Mode::Gas),
            _ => Err(self.invalid("student.mode")),
        }
    }

    pub fn train(&self) -> Result<TrainConfig> {
        let d = TrainConfig::default();
        let steps: usize = self.required("student.N")?;
        if steps == 0 {
            return Err(self.invalid("student.N"));
        }
        let distance = match self.get("train.distance").unwrap_or("l2") {
            "l2" => Distance::L2,
            "l1" => Distance::L1,
            _ => return Err(self.invalid("train.distance")),
        };
        let disc_zero_init = match self.get("train.disc_init").unwrap_or("uniform") {
            "uniform" => false,
            "zero" => true,
            _ => return Err(self.invalid("train.disc_init")),
        };
        let cfg = TrainConfig {
            mode: self.mode()?,
            steps,
            lr: self.or("train.lr", d.lr)?,
            disc_lr: self.or("train.disc_lr", d.disc_lr)?,
            beta1: self.or("train.beta1", d.beta1)?,
            beta2: self.or("train.beta2", d.beta2)?,
            weight_decay: self.or("train.weight_decay", d.weight_decay)?,
            ema_decay: self.or("train.ema_decay", d.ema_decay)?,
            clip_norm: self.or("train.clip_norm", d.clip_norm)?,
            w_adv: self.or("train.w_adv", d.w_adv)?,
            lambda1: self.or("train.lambda1", d.lambda1)?,
            lambda2: self.or("train.lambda2", d.lambda2)?,
            batch_size: self.or("train.batch_size", d.batch_size)?,
            iterations: self.or("train.iterations", d.iterations)?,
            seed: self.seed()?,
            distance,
            disc_zero_init,
        };
        cfg.validate().map_err(|e| CliError::Model(e.to_string()))?;
        Ok(cfg)
    }

    pub fn order_steps(&self) -> Result<Vec<usize>> {
        match self.get("order.steps") {
            None => Ok(vec![10, 20, 40, 80]),
            Some(v) => v.split(',').map(|p| self.parsed("order.steps", p.trim())).collect(),
        }
    }

    pub fn sweep_weights(&self) -> Result<Vec<f64>> {
        match self.get("sweep.w_adv") {
            None => Ok(vec![0.0, 0.1, 1.0]),
            Some(v) => self.list("sweep.w_adv", v),
        }
    }
}

pub fn parse_grid(s: &str) -> Option<GridKind> {
    if s == "logsnr" {
        return Some(GridKind::LogSnr);
    }
    let rho: f64 = s.strip_prefix("polynomial:")?.parse().ok()?;
    (rho > 0.0).then_some(GridKind::Polynomial(rho))
}

pub fn grid_name(g: GridKind) -> String {
    match g {
        GridKind::LogSnr => "logsnr".to_string(),
        GridKind::Polynomial(rho) => format!("polynomial:{rho}"),
    }
}

pub fn solver_name(s: SolverKind) -> &'static str {
    match s {
        SolverKind::Euler => "euler",
        SolverKind::Dpmpp3m => "dpmpp3m",
        SolverKind::Rk4 => "rk4",
    }
}

pub fn mode_name(m: Mode) -> &'static str {
    match m {
        Mode::Gs => "gs",
        Mode::Gas => "gas",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = "\
# two blobs
problem.d = 2
mixture.0.weight = 0.5
mixture.0.mean = -1, 0
mixture.0.var = 0.1
mixture.1.weight = 0.5
mixture.1.mean = 1,0
mixture.1.var = 0.2
seed = 7
";

    #[test]
    fn parses_mixture_and_defaults() {
        let c = Config::parse(BASIC).unwrap();
        let m = c.mixture().unwrap();
        assert_eq!(m.dim(), 2);
        assert_eq!(m.components().len(), 2);
        assert_eq!(m.components()[0].mean, vec![-1.0, 0.0]);
        assert_eq!(c.seed().unwrap(), 7);
        assert_eq!(c.teacher().unwrap(), TeacherConfig::default());
        assert_eq!(c.data_sizes().unwrap(), (1400, 1000));
    }

    #[test]
    fn unknown_key_is_named() {
        let err = Config::parse("problem.dd = 2").unwrap_err();
        assert_eq!(err, CliError::UnknownKey("problem.dd".into()));
        assert!(err.to_string().contains("problem.dd"));
        assert!(Config::parse("mixture.x.weight = 1").is_err());
        assert!(Config::parse("mixture.0.colour = 1").is_err());
    }

    #[test]
    fn student_n_only_required_for_training() {
        let c = Config::parse(BASIC).unwrap();
        assert!(c.mixture().is_ok() && c.teacher().is_ok());
        assert_eq!(c.train().unwrap_err(), CliError::MissingKey("student.N".into()));
    }

    #[test]
    fn malformed_values() {
        let c = Config::parse("problem.d = two").unwrap();
        assert!(matches!(c.mixture(), Err(CliError::InvalidValue { .. })));
        assert!(matches!(Config::parse("just words"), Err(CliError::Syntax { line: 1, .. })));
        assert!(matches!(Config::parse("seed=1\nseed=2"), Err(CliError::DuplicateKey(_))));
        let c = Config::parse("problem.d = 1\nmixture.0.weight = 1\nmixture.0.mean = 0, 1\nmixture.0.var = 1").unwrap();
        assert!(matches!(c.mixture(), Err(CliError::Dimension { .. })));
    }

    #[test]
    fn grid_names_round_trip() {
        for g in [GridKind::LogSnr, GridKind::Polynomial(2.0), GridKind::Polynomial(0.5)] {
            assert_eq!(parse_grid(&grid_name(g)), Some(g));
        }
        assert_eq!(parse_grid("polynomial:-1"), None);
    }
}
