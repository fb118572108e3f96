//! Experiment configuration: flat `key = value` files whose keys mirror the
//! CLI flags.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::estimator::{default_reset_point, Mode, StepSchedule, TruncationFamily};
use crate::model::UnreliabilityVector;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScheduleSpec {
    Harmonic,
    Power(f64),
}

impl ScheduleSpec {
    pub fn build(&self) -> Result<StepSchedule> {
        match *self {
            ScheduleSpec::Harmonic => Ok(StepSchedule::harmonic()),
            ScheduleSpec::Power(p) => StepSchedule::power_law(p, 1.0),
        }
    }
}

impl FromStr for ScheduleSpec {
    type Err = Error;

    /// `harmonic` or `power:<p>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "harmonic" {
            return Ok(ScheduleSpec::Harmonic);
        }
        if let Some(p) = s.strip_prefix("power:") {
            let p: f64 = p
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad power exponent in schedule {s:?}")))?;
            StepSchedule::power_law(p, 1.0).map_err(|e| Error::Config(e.to_string()))?;
            return Ok(ScheduleSpec::Power(p));
        }
        Err(Error::Config(format!("unknown schedule {s:?}; expected harmonic or power:<p>")))
    }
}

impl fmt::Display for ScheduleSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScheduleSpec::Harmonic => write!(f, "harmonic"),
            ScheduleSpec::Power(p) => write!(f, "power:{p}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Agent count; inferred from `pi` when unset.
    pub n: Option<usize>,
    pub pi: Vec<f64>,
    pub seed: u64,
    pub horizon: u64,
    pub schedule: ScheduleSpec,
    pub trunc_c: f64,
    pub trunc_gamma: f64,
    /// `P(0)`; defaults to the reset point.
    pub init: Option<Vec<f64>>,
    /// `P₀`; defaults to `½ - 0.05 i/n`.
    pub reset_point: Option<Vec<f64>>,
    pub mode: Mode,
    /// Defaults to `⌈T / 10^4⌉`.
    pub cadence: Option<u64>,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n: None,
            pi: vec![0.1, 0.2, 0.3],
            seed: 0,
            horizon: 1_000_000,
            schedule: ScheduleSpec::Harmonic,
            trunc_c: 0.25,
            trunc_gamma: 0.5,
            init: None,
            reset_point: None,
            mode: Mode::Truncated,
            cadence: None,
            out: PathBuf::from("out"),
        }
    }
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?} as a number")))
        })
        .collect()
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

impl ExperimentConfig {
    /// Sets one key. Hyphens and underscores are interchangeable.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('_', "-");
        match key.as_str() {
            "n" => self.n = Some(parse_num(&key, value)?),
            "pi" => self.pi = parse_list(&key, value)?,
            "seed" => self.seed = parse_num(&key, value)?,
            "horizon" => self.horizon = parse_num(&key, value)?,
            "schedule" => self.schedule = value.parse()?,
            "trunc-c" => self.trunc_c = parse_num(&key, value)?,
            "trunc-gamma" => self.trunc_gamma = parse_num(&key, value)?,
            "init" => self.init = Some(parse_list(&key, value)?),
            "reset-point" => self.reset_point = Some(parse_list(&key, value)?),
            "mode" => {
                self.mode = match value.trim() {
                    "truncated" => Mode::Truncated,
                    "plain" => Mode::Plain,
                    other => return Err(Error::Config(format!("mode: expected truncated or plain, got {other:?}"))),
                }
            }
            "cadence" => self.cadence = Some(parse_num(&key, value)?),
            "out" => self.out = PathBuf::from(value.trim()),
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Applies every `key = value` line of `text` on top of `self`. Blank
    /// lines and `#` comments are skipped.
    pub fn merge_str(&mut self, text: &str) -> Result<()> {
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            self.set(key, value)?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::default();
        config.merge_str(&text)?;
        Ok(config)
    }

    pub fn n(&self) -> usize {
        self.n.unwrap_or(self.pi.len())
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if n == 0 {
            return Err(Error::Config("need at least one agent".into()));
        }
        if self.pi.len() != n {
            return Err(Error::Config(format!("n = {n} but pi has {} entries", self.pi.len())));
        }
        if let Some(c) = self.cadence {
            if c == 0 {
                return Err(Error::Config("cadence must be at least 1".into()));
            }
        }
        self.pi_vector()?;
        self.family()?;
        self.schedule.build().map_err(|e| Error::Config(e.to_string()))?;
        for (name, v) in [("init", &self.init), ("reset-point", &self.reset_point)] {
            if let Some(v) = v {
                if v.len() != n {
                    return Err(Error::Config(format!("{name} has {} entries, expected {n}", v.len())));
                }
                UnreliabilityVector::new(v.clone()).map_err(|e| Error::Config(format!("{name}: {e}")))?;
            }
        }
        Ok(())
    }

    pub fn pi_vector(&self) -> Result<UnreliabilityVector> {
        UnreliabilityVector::interior(self.pi.clone()).map_err(|e| Error::Config(format!("pi: {e}")))
    }

    pub fn family(&self) -> Result<TruncationFamily> {
        TruncationFamily::new(self.trunc_c, self.trunc_gamma).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn reset_point_vector(&self) -> Result<UnreliabilityVector> {
        match &self.reset_point {
            Some(v) => UnreliabilityVector::new(v.clone()),
            None => Ok(default_reset_point(self.n())),
        }
    }
}
