//! Text checkpoints: one named array per line.
//!
//! ```text
//! # gasolve-ckpt v1
//! # activation=softplus
//! dim 2
//! steps 4
//! theta 1.2345678901234567e0 ...
//! config.train.lr 1e-3
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use gasolve_core::disc::{self, Discriminator};
use gasolve_core::gs::{group_sizes, param_count, GsParams};
use gasolve_core::optim::AdamState;
use gasolve_core::train::{DiscState, Mode, Trainer};

use crate::config::{mode_name, Config};
use crate::dataset::fmt_f64;
use crate::error::{CliError, Result};

const MAGIC: &str = "# gasolve-ckpt";

const GROUPS: [&str; 6] = ["theta", "xi", "a_diag", "a_off", "c_recent", "c_old"];

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub dim: usize,
    pub mode: Mode,
    pub iteration: usize,
    pub params: GsParams,
    pub ema: GsParams,
    pub adam: AdamState,
    pub disc: Option<DiscState>,
    /// Configuration entries the run was started with.
    pub config: Vec<(String, String)>,
}

impl Checkpoint {
    pub fn from_trainer(trainer: &Trainer<'_>, dim: usize, config: &Config) -> Self {
        Self {
            dim,
            mode: trainer.cfg.mode,
            iteration: trainer.iteration,
            params: trainer.current(),
            ema: trainer.ema_params(),
            adam: trainer.adam.clone(),
            disc: trainer.disc.clone(),
            config: config.entries().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }

    pub fn steps(&self) -> usize {
        self.params.steps()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut line = |name: &str, vals: &[f64]| {
            s.push_str(name);
            for v in vals {
                s.push(' ');
                s.push_str(&fmt_f64(*v));
            }
            s.push('\n');
        };
        let mut head = format!("{MAGIC} v1\n# activation={}\n", disc::ACTIVATION);
        writeln!(head, "dim {}", self.dim).unwrap();
        writeln!(head, "steps {}", self.steps()).unwrap();
        writeln!(head, "mode {}", mode_name(self.mode)).unwrap();
        writeln!(head, "iteration {}", self.iteration).unwrap();
        for (name, vals) in GROUPS.iter().zip(self.params.groups()) {
            line(name, vals);
        }
        for (name, vals) in GROUPS.iter().zip(self.ema.groups()) {
            line(&format!("ema.{name}"), vals);
        }
        line("adam.m", &self.adam.m);
        line("adam.v", &self.adam.v);
        if let Some(ds) = &self.disc {
            line("disc.weights", &ds.disc.weights);
            line("disc.adam.m", &ds.adam.m);
            line("disc.adam.v", &ds.adam.v);
        }
        let mut tail = format!("adam.t {}\n", self.adam.t);
        if let Some(ds) = &self.disc {
            writeln!(tail, "disc.adam.t {}", ds.adam.t).unwrap();
        }
        for (k, v) in &self.config {
            writeln!(tail, "config.{k} {v}").unwrap();
        }
        head + &s + &tail
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| CliError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let head = lines.next().unwrap_or_default();
        let version = head
            .strip_prefix(MAGIC)
            .ok_or_else(|| CliError::Checkpoint("missing `# gasolve-ckpt` header".into()))?
            .trim();
        if version != "v1" {
            return Err(CliError::UnsupportedVersion {
                kind: "checkpoint",
                version: version.to_string(),
            });
        }
        let mut arrays: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        let mut config = Vec::new();
        for l in lines {
            if l.starts_with('#') || l.trim().is_empty() {
                continue;
            }
            let (name, rest) = l.split_once(' ').unwrap_or((l, ""));
            if let Some(key) = name.strip_prefix("config.") {
                config.push((key.to_string(), rest.to_string()));
                continue;
            }
            if !known_array(name) {
                return Err(CliError::UnknownArray(name.to_string()));
            }
            if arrays.insert(name, rest.split_whitespace().collect()).is_some() {
                return Err(CliError::Checkpoint(format!("array `{name}` given twice")));
            }
        }
        let mut a = Arrays(arrays);
        let dim: usize = a.scalar("dim")?;
        let steps: usize = a.scalar("steps")?;
        if steps == 0 {
            return Err(CliError::BadValue {
                name: "steps".into(),
                value: "0".into(),
            });
        }
        let mode = match a.take("mode")?.as_slice() {
            ["gs"] => Mode::Gs,
            ["gas"] => Mode::Gas,
            other => {
                return Err(CliError::BadValue {
                    name: "mode".into(),
                    value: other.join(" "),
                })
            }
        };
        let iteration = a.scalar("iteration")?;
        let sizes = group_sizes(steps);
        let mut groups = |prefix: &str| -> Result<GsParams> {
            let mut flat = Vec::with_capacity(param_count(steps));
            for (g, n) in GROUPS.iter().zip(sizes) {
                let name = format!("{prefix}{g}");
                flat.extend(a.floats(&name, n)?);
            }
            Ok(GsParams::from_flat(steps, &flat)?)
        };
        let params = groups("")?;
        let ema = groups("ema.")?;
        let count = param_count(steps);
        let adam = AdamState {
            m: a.floats("adam.m", count)?,
            v: a.floats("adam.v", count)?,
            t: a.scalar("adam.t")?,
        };
        let disc = match mode {
            Mode::Gs => None,
            Mode::Gas => {
                let wc = disc::weight_count(dim);
                let weights = a.floats("disc.weights", wc)?;
                Some(DiscState {
                    disc: Discriminator::from_weights(dim, weights)?,
                    adam: AdamState {
                        m: a.floats("disc.adam.m", wc)?,
                        v: a.floats("disc.adam.v", wc)?,
                        t: a.scalar("disc.adam.t")?,
                    },
                })
            }
        };
        if let Some(name) = a.0.keys().next() {
            return Err(CliError::Checkpoint(format!("array `{name}` does not belong to a {} checkpoint", mode_name(mode))));
        }
        Ok(Self {
            dim,
            mode,
            iteration,
            params,
            ema,
            adam,
            disc,
            config,
        })
    }
}

fn known_array(name: &str) -> bool {
    let base = name.strip_prefix("ema.").unwrap_or(name);
    matches!(
        name,
        "dim" | "steps" | "mode" | "iteration" | "adam.m" | "adam.v" | "adam.t" | "disc.weights" | "disc.adam.m" | "disc.adam.v" | "disc.adam.t"
    ) || GROUPS.contains(&base)
}

struct Arrays<'a>(BTreeMap<&'a str, Vec<&'a str>>);

impl<'a> Arrays<'a> {
    fn take(&mut self, name: &str) -> Result<Vec<&'a str>> {
        self.0.remove(name).ok_or_else(|| CliError::MissingArray(name.to_string()))
    }

    fn scalar<T: std::str::FromStr>(&mut self, name: &str) -> Result<T> {
        let vals = self.take(name)?;
        let [v] = vals.as_slice() else {
            return Err(CliError::ArrayLength {
                name: name.to_string(),
                expected: 1,
                got: vals.len(),
            });
        };
        v.parse().map_err(|_| CliError::BadValue {
            name: name.to_string(),
            value: v.to_string(),
        })
    }

    fn floats(&mut self, name: &str, expected: usize) -> Result<Vec<f64>> {
        let vals = self.take(name)?;
        if vals.len() != expected {
            return Err(CliError::ArrayLength {
                name: name.to_string(),
                expected,
                got: vals.len(),
            });
        }
        vals.iter()
            .map(|v| {
                v.parse().map_err(|_| CliError::BadValue {
                    name: name.to_string(),
                    value: v.to_string(),
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use gasolve_core::schedule::NoiseSchedule;

    fn sample(mode: Mode) -> Checkpoint {
        let s = NoiseSchedule::variance_exploding(10.0, 1e-3).unwrap();
        let params = gasolve_core::gs::init_params(3, &s).unwrap();
        let mut ema = params.clone();
        ema.xi[1] = -0.125;
        let n = param_count(3);
        let disc = (mode == Mode::Gas).then(|| DiscState {
            disc: Discriminator::zeros(2),
            adam: AdamState::new(disc::weight_count(2)),
        });
        Checkpoint {
            dim: 2,
            mode,
            iteration: 17,
            params,
            ema,
            adam: AdamState {
                m: (0..n).map(|i| i as f64 / 7.0).collect(),
                v: vec![1e-300; n],
                t: 17,
            },
            disc,
            config: vec![("problem.d".into(), "2".into()), ("mixture.0.mean".into(), "0, 1".into())],
        }
    }

    #[test]
    fn round_trips_both_modes() {
        for mode in [Mode::Gs, Mode::Gas] {
            let c = sample(mode);
            let text = c.to_text();
            assert!(text.starts_with("# gasolve-ckpt v1\n# activation=softplus\n"));
            assert_eq!(Checkpoint::parse(&text).unwrap(), c);
        }
    }

    #[test]
    fn distinct_errors() {
        let text = sample(Mode::Gs).to_text();
        assert!(matches!(
            Checkpoint::parse(&text.replace("ckpt v1", "ckpt v999")),
            Err(CliError::UnsupportedVersion { .. })
        ));
        assert_eq!(
            Checkpoint::parse(&text.replace("\nxi ", "\nzeta ")).unwrap_err(),
            CliError::UnknownArray("zeta".into())
        );
        let short: String = text
            .lines()
            .map(|l| match l.strip_prefix("xi ") {
                Some(rest) => format!("xi {}\n", rest.rsplit_once(' ').unwrap().0),
                None => format!("{l}\n"),
            })
            .collect();
        assert!(matches!(Checkpoint::parse(&short), Err(CliError::ArrayLength { ref name, .. }) if name == "xi"));
        let missing: String = text.lines().filter(|l| !l.starts_with("c_old")).map(|l| format!("{l}\n")).collect();
        assert_eq!(Checkpoint::parse(&missing).unwrap_err(), CliError::MissingArray("c_old".into()));
    }
}
