//! Run and grid configurations as flat `key=value` text.
//!
//! Command-line flags are turned into the same key/value pairs and applied on
//! top of the file, so a bad value always reports the key it came from.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::envs::integrators::Discretizer;
use crate::envs::EnvKind;
use crate::error::{Error, Result};
use crate::linesearch::{Rule, StopCriteria};
use crate::oracles::OracleKind;

fn config_err(field: &str, msg: impl Into<String>) -> Error {
    Error::Config {
        field: field.into(),
        msg: msg.into(),
    }
}

/// Splits `key=value` lines, skipping blanks and `#` comments.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| config_err(&format!("line {}", n + 1), "expected key=value"))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn parse_value<T: FromStr>(field: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| config_err(field, format!("cannot parse `{value}`")))
}

fn parse_enum<T: FromStr<Err = Error>>(field: &str, value: &str) -> Result<T> {
    value.parse().map_err(|e| match e {
        Error::Config { msg, .. } => config_err(field, msg),
        other => config_err(field, other.to_string()),
    })
}

fn parse_list<T>(field: &str, value: &str, item: impl Fn(&str, &str) -> Result<T>) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| item(field, s))
        .collect()
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

/// Settings shared by single runs and grids.
#[derive(Debug, Clone, PartialEq)]
pub struct Common {
    /// `None` picks the environment's default scheme.
    pub discretizer: Option<Discretizer>,
    /// `None` starts from zero controls; a seed draws them uniformly in `[-init_scale, init_scale]`.
    pub seed: Option<u64>,
    pub init_scale: f64,
    pub stop: StopCriteria,
}

impl Default for Common {
    fn default() -> Self {
        Self {
            discretizer: None,
            seed: None,
            init_scale: 0.1,
            stop: StopCriteria::default(),
        }
    }
}

impl Common {
    fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "discretizer" => {
                self.discretizer = if value == "auto" {
                    None
                } else {
                    Some(parse_enum(key, value)?)
                };
            }
            "seed" => {
                self.seed = if value == "none" {
                    None
                } else {
                    Some(parse_value(key, value)?)
                };
            }
            "init_scale" => {
                let s: f64 = parse_value(key, value)?;
                if !(s >= 0.0 && s.is_finite()) {
                    return Err(config_err(key, "must be finite and non-negative"));
                }
                self.init_scale = s;
            }
            "max_iters" => self.stop.max_iters = parse_value(key, value)?,
            "rel_cost_tol" => {
                let s: f64 = parse_value(key, value)?;
                if !(s >= 0.0) {
                    return Err(config_err(key, "must be non-negative"));
                }
                self.stop.rel_cost_tol = s;
            }
            "min_step" => {
                let s: f64 = parse_value(key, value)?;
                if !(s >= 0.0) {
                    return Err(config_err(key, "must be non-negative"));
                }
                self.stop.min_step = s;
            }
            _ => return Ok(false),
        }
        Ok(true)
    }

    fn write(&self, out: &mut String) {
        let disc = self.discretizer.map_or("auto".to_string(), |d| d.to_string());
        let seed = self.seed.map_or("none".to_string(), |s| s.to_string());
        let _ = writeln!(out, "discretizer={disc}");
        let _ = writeln!(out, "seed={seed}");
        let _ = writeln!(out, "init_scale={}", self.init_scale);
        let _ = writeln!(out, "max_iters={}", self.stop.max_iters);
        let _ = writeln!(out, "rel_cost_tol={}", self.stop.rel_cost_tol);
        let _ = writeln!(out, "min_step={}", self.stop.min_step);
    }

    /// Scheme for `env`: the configured one or the environment's default.
    pub fn discretizer_for(&self, env: EnvKind) -> Discretizer {
        self.discretizer.unwrap_or_else(|| env.default_discretizer())
    }
}

fn check_horizon(h: usize) -> Result<usize> {
    if h == 0 {
        Err(config_err("horizon", "must be at least 1"))
    } else {
        Ok(h)
    }
}

fn parse_horizon(field: &str, value: &str) -> Result<usize> {
    check_horizon(parse_value(field, value)?)
}

/// One solve.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub env: EnvKind,
    pub algo: OracleKind,
    pub linesearch: Rule,
    pub horizon: usize,
    pub common: Common,
    /// Trace destination; `None` writes to stdout.
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            env: EnvKind::Pendulum,
            algo: OracleKind::Gn,
            linesearch: Rule::Directional,
            horizon: 50,
            common: Common::default(),
            out: None,
        }
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "env" => self.env = parse_enum(key, value)?,
            "algo" => self.algo = parse_enum(key, value)?,
            "linesearch" => self.linesearch = parse_enum(key, value)?,
            "horizon" => self.horizon = parse_horizon(key, value)?,
            "out" => self.out = (!value.is_empty()).then(|| PathBuf::from(value)),
            _ => {
                if !self.common.set(key, value)? {
                    return Err(config_err(key, "unknown key"));
                }
            }
        }
        Ok(())
    }

    pub fn apply(&mut self, pairs: &[(String, String)]) -> Result<()> {
        pairs.iter().try_for_each(|(k, v)| self.set(k, v))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply(&parse_pairs(text)?)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Canonical text form; parsing it gives back the same configuration.
    pub fn serialize(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "env={}", self.env);
        let _ = writeln!(s, "algo={}", self.algo);
        let _ = writeln!(s, "linesearch={}", self.linesearch);
        let _ = writeln!(s, "horizon={}", self.horizon);
        self.common.write(&mut s);
        let out = self.out.as_ref().map_or(String::new(), |p| p.display().to_string());
        let _ = writeln!(s, "out={out}");
        s
    }

    pub fn discretizer(&self) -> Discretizer {
        self.common.discretizer_for(self.env)
    }
}

/// Cartesian grid of runs for the benchmark command.
#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub envs: Vec<EnvKind>,
    pub algos: Vec<OracleKind>,
    pub linesearches: Vec<Rule>,
    pub horizons: Vec<usize>,
    pub common: Common,
    pub out: PathBuf,
    pub parallel: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            envs: vec![EnvKind::Pendulum],
            algos: OracleKind::ALL.to_vec(),
            linesearches: Rule::ALL.to_vec(),
            horizons: vec![50],
            common: Common::default(),
            out: PathBuf::from("bench-out"),
            parallel: 1,
        }
    }
}

impl GridConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "env" => self.envs = parse_list(key, value, parse_enum)?,
            "algo" => self.algos = parse_list(key, value, parse_enum)?,
            "linesearch" => self.linesearches = parse_list(key, value, parse_enum)?,
            "horizon" => self.horizons = parse_list(key, value, parse_horizon)?,
            "out" => {
                if value.is_empty() {
                    return Err(config_err(key, "benchmark needs an output directory"));
                }
                self.out = PathBuf::from(value);
            }
            "parallel" => {
                let n: usize = parse_value(key, value)?;
                if n == 0 {
                    return Err(config_err(key, "must be at least 1"));
                }
                self.parallel = n;
            }
            _ => {
                if !self.common.set(key, value)? {
                    return Err(config_err(key, "unknown key"));
                }
            }
        }
        Ok(())
    }

    pub fn apply(&mut self, pairs: &[(String, String)]) -> Result<()> {
        pairs.iter().try_for_each(|(k, v)| self.set(k, v))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply(&parse_pairs(text)?)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn serialize(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "env={}", join(&self.envs));
        let _ = writeln!(s, "algo={}", join(&self.algos));
        let _ = writeln!(s, "linesearch={}", join(&self.linesearches));
        let _ = writeln!(s, "horizon={}", join(&self.horizons));
        self.common.write(&mut s);
        let _ = writeln!(s, "out={}", self.out.display());
        let _ = writeln!(s, "parallel={}", self.parallel);
        s
    }

    /// Number of cells.
    pub fn len(&self) -> usize {
        self.envs.len() * self.algos.len() * self.linesearches.len() * self.horizons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
