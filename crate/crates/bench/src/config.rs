//! Flat `key = value` experiment configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Lists are
//! comma-separated. Unknown keys are errors so typos do not go unnoticed.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};

/// Parsed key/value pairs, consumed by the typed configs below.
#[derive(Debug, Clone, Default)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected key = value, got {raw:?}", no + 1))?;
            entries.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(key.to_string(), value.into());
    }

    fn take(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key)
    }

    fn take_parsed<T: std::str::FromStr>(&mut self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        match self.take(key) {
            Some(v) => v.parse::<T>().map_err(|e| anyhow!("key {key}: cannot parse {v:?}: {e}")),
            None => Ok(default),
        }
    }

    fn take_list<T: std::str::FromStr>(&mut self, key: &str, default: Vec<T>) -> Result<Vec<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.take(key) {
            Some(v) => v
                .split(',')
                .map(|s| s.trim())
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<T>().map_err(|e| anyhow!("key {key}: cannot parse {s:?}: {e}")))
                .collect(),
            None => Ok(default),
        }
    }

    fn finish(self) -> Result<()> {
        if let Some(k) = self.entries.keys().next() {
            bail!("unknown config key {k:?}");
        }
        Ok(())
    }
}

/// Seeds `1..=n`.
pub fn default_seeds(n: u64) -> Vec<u64> {
    (1..=n).collect()
}

/// Piecewise-stationary regression benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct OcoConfig {
    pub scenario: String,
    pub horizon: usize,
    pub dim: usize,
    /// Rounds between changes of the true model.
    pub change_period: usize,
    /// Feature radius `Gamma`.
    pub feature_radius: f64,
    pub diameter: f64,
    pub grad_bound: f64,
    /// Noise is uniform on `[0, noise_max]`.
    pub noise_max: f64,
    pub alphas: Vec<f64>,
    pub seeds: Vec<u64>,
    pub algorithms: Vec<String>,
    pub out_dir: PathBuf,
    pub trace: bool,
    pub timing: bool,
}

impl Default for OcoConfig {
    fn default() -> Self {
        Self {
            scenario: "piecewise-regression".into(),
            horizon: 20000,
            dim: 10,
            change_period: 2000,
            feature_radius: 1.0,
            diameter: 2.0,
            grad_bound: 2.0,
            noise_max: 0.1,
            alphas: vec![0.1, 0.5, 1.0],
            seeds: default_seeds(5),
            algorithms: vec!["ogd".into(), "ader".into(), "scream".into()],
            out_dir: PathBuf::from("results"),
            trace: false,
            timing: false,
        }
    }
}

pub const OCO_ALGORITHMS: [&str; 3] = ["ogd", "ader", "scream"];

impl OcoConfig {
    pub fn from_kv(mut kv: KeyValues) -> Result<Self> {
        let d = Self::default();
        let cfg = Self {
            scenario: kv.take_parsed("scenario", d.scenario)?,
            horizon: kv.take_parsed("horizon", d.horizon)?,
            dim: kv.take_parsed("dim", d.dim)?,
            change_period: kv.take_parsed("change_period", d.change_period)?,
            feature_radius: kv.take_parsed("feature_radius", d.feature_radius)?,
            diameter: kv.take_parsed("diameter", d.diameter)?,
            grad_bound: kv.take_parsed("grad_bound", d.grad_bound)?,
            noise_max: kv.take_parsed("noise_max", d.noise_max)?,
            alphas: kv.take_list("alphas", d.alphas)?,
            seeds: kv.take_list("seeds", d.seeds)?,
            algorithms: kv.take_list("algorithms", d.algorithms)?,
            out_dir: kv.take_parsed("out", d.out_dir)?,
            trace: kv.take_parsed("trace", d.trace)?,
            timing: kv.take_parsed("timing", d.timing)?,
        };
        kv.finish()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 || self.dim == 0 || self.change_period == 0 {
            bail!("horizon, dim and change_period must be positive");
        }
        if self.diameter <= 0.0 || self.grad_bound <= 0.0 || self.feature_radius <= 0.0 {
            bail!("diameter, grad_bound and feature_radius must be positive");
        }
        if self.noise_max < 0.0 {
            bail!("noise_max must be non-negative");
        }
        if self.alphas.iter().any(|a| *a < 0.0 || !a.is_finite()) {
            bail!("alphas must be non-negative");
        }
        for a in &self.algorithms {
            if !OCO_ALGORITHMS.contains(&a.as_str()) {
                bail!("unknown algorithm {a:?}; known: {}", OCO_ALGORITHMS.join(", "));
            }
        }
        Ok(())
    }
}

/// Control tracking benchmark on a preset system.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlBenchConfig {
    pub scenario: String,
    pub preset: String,
    pub horizon: usize,
    pub h: usize,
    pub w_bound: f64,
    pub disturbance: String,
    pub segments: usize,
    pub target_radius: f64,
    pub r: f64,
    pub lambda_multiplier: f64,
    pub seeds: Vec<u64>,
    pub algorithms: Vec<String>,
    pub fit_iterations: usize,
    pub out_dir: PathBuf,
    pub trace: bool,
    pub timing: bool,
}

pub const CONTROL_ALGORITHMS: [&str; 3] = ["scream-control", "ogd-dac", "zero"];

impl Default for ControlBenchConfig {
    fn default() -> Self {
        Self {
            scenario: "tracking".into(),
            preset: "stable3x2".into(),
            horizon: 8000,
            h: 20,
            w_bound: 0.5,
            disturbance: "step".into(),
            segments: 5,
            target_radius: 1.0,
            r: 0.1,
            lambda_multiplier: 1.0,
            seeds: default_seeds(5),
            algorithms: CONTROL_ALGORITHMS.iter().map(|s| s.to_string()).collect(),
            fit_iterations: 300,
            out_dir: PathBuf::from("results"),
            trace: false,
            timing: false,
        }
    }
}

impl ControlBenchConfig {
    pub fn from_kv(mut kv: KeyValues) -> Result<Self> {
        let d = Self::default();
        let cfg = Self {
            scenario: kv.take_parsed("scenario", d.scenario)?,
            preset: kv.take_parsed("preset", d.preset)?,
            horizon: kv.take_parsed("horizon", d.horizon)?,
            h: kv.take_parsed("h", d.h)?,
            w_bound: kv.take_parsed("w_bound", d.w_bound)?,
            disturbance: kv.take_parsed("disturbance", d.disturbance)?,
            segments: kv.take_parsed("segments", d.segments)?,
            target_radius: kv.take_parsed("target_radius", d.target_radius)?,
            r: kv.take_parsed("r", d.r)?,
            lambda_multiplier: kv.take_parsed("lambda_multiplier", d.lambda_multiplier)?,
            seeds: kv.take_list("seeds", d.seeds)?,
            algorithms: kv.take_list("algorithms", d.algorithms)?,
            fit_iterations: kv.take_parsed("fit_iterations", d.fit_iterations)?,
            out_dir: kv.take_parsed("out", d.out_dir)?,
            trace: kv.take_parsed("trace", d.trace)?,
            timing: kv.take_parsed("timing", d.timing)?,
        };
        kv.finish()?;
        if cfg.horizon == 0 || cfg.h == 0 || cfg.segments == 0 {
            bail!("horizon, h and segments must be positive");
        }
        for a in &cfg.algorithms {
            if !CONTROL_ALGORITHMS.contains(&a.as_str()) {
                bail!("unknown algorithm {a:?}; known: {}", CONTROL_ALGORITHMS.join(", "));
            }
        }
        Ok(cfg)
    }
}

/// Identification-rate benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct SysidBenchConfig {
    pub preset: String,
    pub w_bound: f64,
    pub explore_grid: Vec<usize>,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
}

impl Default for SysidBenchConfig {
    fn default() -> Self {
        Self {
            preset: "stable3x2".into(),
            w_bound: 0.1,
            explore_grid: vec![1000, 4000, 16000, 64000],
            seeds: default_seeds(20),
            out_dir: PathBuf::from("results"),
        }
    }
}

impl SysidBenchConfig {
    pub fn from_kv(mut kv: KeyValues) -> Result<Self> {
        let d = Self::default();
        let cfg = Self {
            preset: kv.take_parsed("preset", d.preset)?,
            w_bound: kv.take_parsed("w_bound", d.w_bound)?,
            explore_grid: kv.take_list("explore_grid", d.explore_grid)?,
            seeds: kv.take_list("seeds", d.seeds)?,
            out_dir: kv.take_parsed("out", d.out_dir)?,
        };
        kv.finish()?;
        if cfg.explore_grid.len() < 2 {
            bail!("explore_grid needs at least two entries");
        }
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_regression_protocol() {
        let c = OcoConfig::from_kv(KeyValues::default()).unwrap();
        assert_eq!((c.horizon, c.dim, c.change_period), (20000, 10, 2000));
        assert_eq!((c.diameter, c.grad_bound, c.feature_radius), (2.0, 2.0, 1.0));
        assert_eq!(c.alphas, vec![0.1, 0.5, 1.0]);
        assert_eq!(c.seeds.len(), 5);
    }

    #[test]
    fn parse_overrides_and_comments() {
        let kv = KeyValues::parse("# comment\nhorizon = 100\nalphas = 0.5, 1\n\nalgorithms=scream\n").unwrap();
        let c = OcoConfig::from_kv(kv).unwrap();
        assert_eq!(c.horizon, 100);
        assert_eq!(c.alphas, vec![0.5, 1.0]);
        assert_eq!(c.algorithms, vec!["scream".to_string()]);
    }

    #[test]
    fn unknown_keys_and_algorithms_fail() {
        assert!(OcoConfig::from_kv(KeyValues::parse("horizn = 3").unwrap()).is_err());
        assert!(OcoConfig::from_kv(KeyValues::parse("algorithms = sgd").unwrap()).is_err());
        assert!(KeyValues::parse("no equals sign").is_err());
    }
}
