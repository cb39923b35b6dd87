//! Scenario files and command-line overrides.

use std::path::Path;

use meshpon_core::scenario::ScenarioConfig;
use meshpon_core::DbaPolicy;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: String, source: toml::de::Error },
    #[error("bad value for {flag}: `{value}`")]
    BadFlag { flag: &'static str, value: String },
}

pub fn load_scenario(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
    parse_scenario(&text).map_err(|source| ConfigError::Parse { path: path.display().to_string(), source })
}

pub fn parse_scenario(text: &str) -> Result<ScenarioConfig, toml::de::Error> {
    toml::from_str(text)
}

/// Values given on the command line; `None` keeps the file's value.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub loads: Option<Vec<f64>>,
    pub slots_us: Option<Vec<f64>>,
    pub dba: Option<DbaPolicy>,
    pub seeds: Option<u32>,
    pub jobs: Option<usize>,
    pub cgs_occupancy_estimate: bool,
    pub trace: bool,
    pub duration_s: Option<f64>,
    pub output_dir: Option<String>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ScenarioConfig) {
        if let Some(l) = &self.loads {
            cfg.loads = l.clone();
        }
        if let Some(s) = &self.slots_us {
            if let [one] = s.as_slice() {
                cfg.radio.set_slot_us(*one);
                cfg.slots_us.clear();
            } else {
                cfg.slots_us = s.clone();
            }
        }
        if let Some(p) = self.dba {
            cfg.set_dba_all(p);
        }
        if let Some(n) = self.seeds {
            cfg.seeds = n;
        }
        if let Some(j) = self.jobs {
            cfg.jobs = j;
        }
        if self.cgs_occupancy_estimate {
            cfg.mac.cgs_occupancy_estimate = true;
        }
        if self.trace {
            cfg.trace = true;
        }
        if let Some(d) = self.duration_s {
            cfg.duration_s = d;
        }
        if let Some(o) = &self.output_dir {
            cfg.output_dir = o.clone();
        }
    }
}

/// `25,50,75` (percent) or `0.25,0.5` (fractions).
pub fn parse_loads(s: &str) -> Result<Vec<f64>, ConfigError> {
    let bad = || ConfigError::BadFlag { flag: "--loads", value: s.to_string() };
    s.split(',')
        .map(|x| {
            let x = x.trim().trim_end_matches('%');
            let v: f64 = x.parse().map_err(|_| bad())?;
            let v = if v > 1.0 { v / 100.0 } else { v };
            if v > 0.0 && v < 1.0 {
                Ok(v)
            } else {
                Err(bad())
            }
        })
        .collect()
}

/// `500us`, `0.25ms`, or a bare number of microseconds; comma lists allowed.
pub fn parse_slots(s: &str) -> Result<Vec<f64>, ConfigError> {
    s.split(',').map(|x| parse_duration_us(x.trim(), "--slot")).collect()
}

pub fn parse_duration_us(s: &str, flag: &'static str) -> Result<f64, ConfigError> {
    let bad = || ConfigError::BadFlag { flag, value: s.to_string() };
    let (num, scale) = if let Some(n) = s.strip_suffix("us") {
        (n, 1.0)
    } else if let Some(n) = s.strip_suffix("ms") {
        (n, 1e3)
    } else if let Some(n) = s.strip_suffix('s') {
        (n, 1e6)
    } else {
        (s, 1.0)
    };
    let v: f64 = num.trim().parse().map_err(|_| bad())?;
    if v > 0.0 && v.is_finite() {
        Ok(v * scale)
    } else {
        Err(bad())
    }
}

pub fn parse_dba(s: &str) -> Result<DbaPolicy, ConfigError> {
    DbaPolicy::parse(s).ok_or(ConfigError::BadFlag { flag: "--dba", value: s.to_string() })
}
