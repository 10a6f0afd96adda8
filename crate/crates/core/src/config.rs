//! Flat `key = value` configuration files.
//!
//! ```text
//! # comments run to end of line
//! families = ghz, qft, random
//! widths = 4..16:2          # inclusive range with step
//! seeds = 1..10
//! noise.p2 = 0.008
//! presets = 2:0:101, 3:1:105  # parts:tolerance:seed
//! ```
//!
//! Unknown keys are errors that name the key.

use std::path::PathBuf;
use std::str::FromStr;

use crate::cutfind::PresetConfig;
use crate::error::{CutError, Result};
use crate::harness::SweepConfig;

pub const KEYS: &[&str] = &[
    "families",
    "widths",
    "seeds",
    "strategies",
    "shots_per_subexperiment",
    "reconstruction_samples",
    "baseline_shots",
    "budget.max_cuts",
    "budget.q_max",
    "budget.overhead_cap",
    "noise.p1",
    "noise.p2",
    "noise.p_readout",
    "observable_family",
    "weights.width",
    "weights.cuts",
    "weights.balance",
    "weights.subexperiments",
    "presets",
    "brickwork_depth",
    "random_depth",
    "master_seed",
    "workers",
    "output_dir",
    "explain",
];

#[derive(Clone, Debug, PartialEq)]
pub struct CliConfig {
    pub sweep: SweepConfig,
    pub output_dir: Option<PathBuf>,
    pub workers: usize,
    pub explain: bool,
}

impl Default for CliConfig {
    fn default() -> Self {
        CliConfig {
            sweep: SweepConfig::default(),
            output_dir: None,
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
            explain: false,
        }
    }
}

fn scalar<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| CutError::Config(format!("{key}: cannot parse {value:?}")))
}

fn list<T: FromStr<Err = CutError>>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|e: CutError| CutError::Config(format!("{key}: {e}"))))
        .collect()
}

/// Comma-separated integers and inclusive ranges `a..b` or `a..b:step`.
fn int_list(key: &str, value: &str) -> Result<Vec<u64>> {
    let mut out = Vec::new();
    for item in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        if let Some((a, rest)) = item.split_once("..") {
            let (b, step) = match rest.split_once(':') {
                Some((b, s)) => (b, scalar::<u64>(key, s)?),
                None => (rest, 1),
            };
            let (a, b) = (scalar::<u64>(key, a)?, scalar::<u64>(key, b)?);
            if step == 0 || a > b {
                return Err(CutError::Config(format!("{key}: bad range {item:?}")));
            }
            out.extend((a..=b).step_by(step as usize));
        } else {
            out.push(scalar(key, item)?);
        }
    }
    Ok(out)
}

fn presets(value: &str) -> Result<Vec<PresetConfig>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|item| {
            let parts: Vec<&str> = item.split(':').collect();
            if parts.len() != 3 {
                return Err(CutError::Config(format!("presets: expected parts:tolerance:seed, got {item:?}")));
            }
            Ok(PresetConfig {
                partitions: scalar("presets", parts[0])?,
                tolerance: scalar("presets", parts[1])?,
                seed: scalar("presets", parts[2])?,
            })
        })
        .collect()
}

impl CliConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let s = &mut self.sweep;
        match key {
            "families" => s.families = list(key, value)?,
            "widths" => s.widths = int_list(key, value)?.into_iter().map(|w| w as usize).collect(),
            "seeds" => s.seeds = int_list(key, value)?,
            "strategies" => s.strategies = list(key, value)?,
            "shots_per_subexperiment" => s.shots_per_subexperiment = scalar(key, value)?,
            "reconstruction_samples" => s.reconstruction_samples = scalar(key, value)?,
            "baseline_shots" => s.baseline_shots = Some(scalar(key, value)?),
            "budget.max_cuts" => s.budget.max_cuts = scalar(key, value)?,
            "budget.q_max" => s.budget.q_max = scalar(key, value)?,
            "budget.overhead_cap" => s.budget.overhead_cap = scalar(key, value)?,
            "noise.p1" => s.noise.p1 = scalar(key, value)?,
            "noise.p2" => s.noise.p2 = scalar(key, value)?,
            "noise.p_readout" => s.noise.p_readout = scalar(key, value)?,
            "observable_family" => s.observable_family = value.parse()?,
            "weights.width" => s.weights.width = scalar(key, value)?,
            "weights.cuts" => s.weights.cuts = scalar(key, value)?,
            "weights.balance" => s.weights.balance = scalar(key, value)?,
            "weights.subexperiments" => s.weights.subexperiments = scalar(key, value)?,
            "presets" => s.presets = presets(value)?,
            "brickwork_depth" => s.brickwork_depth = scalar(key, value)?,
            "random_depth" => s.random_depth = Some(scalar(key, value)?),
            "master_seed" => s.master_seed = scalar(key, value)?,
            "workers" => self.workers = scalar(key, value)?,
            "output_dir" => self.output_dir = Some(PathBuf::from(value.trim())),
            "explain" => self.explain = scalar(key, value)?,
            other => return Err(CutError::Config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Applies every `key = value` line of `text` on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CutError::Config(format!("line {}: expected key = value", i + 1)))?;
            self.set(key.trim(), value)
                .map_err(|e| CutError::Config(format!("line {}: {}", i + 1, e.to_string().trim_start_matches("config error: "))))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 {
            return Err(CutError::Config("workers must be positive".into()));
        }
        self.sweep.validate()
    }
}

impl FromStr for CliConfig {
    type Err = CutError;

    fn from_str(text: &str) -> Result<Self> {
        let mut c = CliConfig::default();
        c.apply_text(text)?;
        c.validate()?;
        Ok(c)
    }
}
