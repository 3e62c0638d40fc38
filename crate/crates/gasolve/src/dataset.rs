//! Paired `(x_T, teacher(x_T))` files.
//!
//! ```text
//! # gasolve-dataset v1 d=<d> n=<rows> seed=<s>
//! # solver=<kind> nfe=<k> grid=<grid>
//! xT_1,..,xT_d,x0_1,..,x0_d
//! ```

use std::io::Write;
use std::path::Path;

use gasolve_core::solver::{SolverKind, TeacherConfig};
use gasolve_core::train::Dataset;

use crate::config::{grid_name, parse_grid, solver_name};
use crate::error::{CliError, Result};

const MAGIC: &str = "# gasolve-dataset";

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetFile {
    pub seed: u64,
    pub teacher: TeacherConfig,
    pub data: Dataset,
}

/// Decimal with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

impl DatasetFile {
    pub fn dim(&self) -> usize {
        self.data.dim()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let d = self.dim();
        let mut out = Vec::new();
        let t = &self.teacher;
        writeln!(out, "{MAGIC} v1 d={d} n={} seed={}", self.data.len(), self.seed).expect("writing to memory");
        writeln!(out, "# solver={} nfe={} grid={}", solver_name(t.solver), t.nfe, grid_name(t.grid)).expect("writing to memory");
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        for (xt, x0) in self.data.x_t.iter().zip(&self.data.x_0) {
            if xt.len() != d || x0.len() != d {
                return Err(CliError::Dataset("rows of unequal dimension".into()));
            }
            w.write_record(xt.iter().chain(x0).map(|v| fmt_f64(*v)))
                .map_err(|e| CliError::Dataset(e.to_string()))?;
        }
        w.into_inner().map_err(|e| CliError::Dataset(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| CliError::io(path, e))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |m: &str| CliError::Dataset(m.to_string());
        let mut lines = text.lines();
        let head = lines.next().ok_or_else(|| bad("empty file"))?;
        let rest = head.strip_prefix(MAGIC).ok_or_else(|| bad("missing `# gasolve-dataset` header"))?;
        let mut fields = rest.split_whitespace();
        let version = fields.next().unwrap_or_default();
        if version != "v1" {
            return Err(CliError::UnsupportedVersion {
                kind: "dataset",
                version: version.to_string(),
            });
        }
        let head_kv = key_values(fields);
        let d: usize = lookup(&head_kv, "d")?;
        let n: usize = lookup(&head_kv, "n")?;
        let seed: u64 = lookup(&head_kv, "seed")?;
        let second = lines.next().and_then(|l| l.strip_prefix('#')).ok_or_else(|| bad("missing teacher line"))?;
        let kv = key_values(second.split_whitespace());
        let solver = match kv.iter().find(|(k, _)| *k == "solver").map(|(_, v)| *v) {
            Some("dpmpp3m") => SolverKind::Dpmpp3m,
            Some("rk4") => SolverKind::Rk4,
            Some("euler") => SolverKind::Euler,
            _ => return Err(bad("unknown teacher solver")),
        };
        let nfe = lookup(&kv, "nfe")?;
        let grid = kv
            .iter()
            .find(|(k, _)| *k == "grid")
            .and_then(|(_, v)| parse_grid(v))
            .ok_or_else(|| bad("unknown teacher grid"))?;

        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let mut data = Dataset::default();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| CliError::Dataset(e.to_string()))?;
            if rec.len() != 2 * d {
                return Err(CliError::Dataset(format!("row {} has {} columns, expected {}", i + 1, rec.len(), 2 * d)));
            }
            let vals = rec
                .iter()
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| CliError::Dataset(format!("row {} is not numeric", i + 1)))?;
            data.x_t.push(vals[..d].to_vec());
            data.x_0.push(vals[d..].to_vec());
        }
        if data.len() != n {
            return Err(CliError::Dataset(format!("header says {n} rows, found {}", data.len())));
        }
        Ok(Self {
            seed,
            teacher: TeacherConfig { solver, nfe, grid },
            data,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text)
    }
}

fn key_values<'a>(fields: impl Iterator<Item = &'a str>) -> Vec<(&'a str, &'a str)> {
    fields.filter_map(|f| f.split_once('=')).collect()
}

fn lookup<T: std::str::FromStr>(kv: &[(&str, &str)], key: &str) -> Result<T> {
    kv.iter()
        .find(|(k, _)| *k == key)
        .and_then(|(_, v)| v.parse().ok())
        .ok_or_else(|| CliError::Dataset(format!("header field `{key}` missing or malformed")))
}
