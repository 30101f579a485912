//! Experiment configuration: JSON file plus command-line overrides.

use crate::CliError;
use isi_core::{ChannelResponse, InputDistribution};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ChannelSpec {
    Taps(Vec<f64>),
    Named(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InputSpec {
    Raw { atoms: Vec<f64>, probs: Vec<f64> },
    Named(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SnrSpec {
    List(Vec<f64>),
    Range { start: f64, stop: f64, step: f64 },
    Text(String),
}

/// Everything an experiment may need; fields missing from both the file and
/// the flags fall back to per-command defaults.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub channel: Option<ChannelSpec>,
    #[serde(default)]
    pub normalize: bool,
    pub input: Option<InputSpec>,
    pub snr_db: Option<SnrSpec>,
    pub half_len: Option<usize>,
    pub n_samples: Option<u64>,
    pub n_symbols: Option<u64>,
    pub seeds: Option<Vec<u64>>,
    pub k_prime: Option<f64>,
    pub budget: Option<u64>,
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn channel(&self) -> Result<ChannelResponse, CliError> {
        let spec = self.channel.as_ref().ok_or_else(|| CliError::Config("no channel given".into()))?;
        let h = match spec {
            ChannelSpec::Taps(t) => ChannelResponse::new(t.clone())?,
            ChannelSpec::Named(s) => parse_channel(s)?,
        };
        Ok(if self.normalize { h.normalized() } else { h })
    }

    pub fn input(&self) -> Result<InputDistribution, CliError> {
        match self.input.as_ref().ok_or_else(|| CliError::Config("no input distribution given".into()))? {
            InputSpec::Raw { atoms, probs } => Ok(InputDistribution::new(atoms.clone(), probs.clone())?),
            InputSpec::Named(s) => parse_input(s),
        }
    }

    pub fn snr_grid(&self) -> Result<Vec<f64>, CliError> {
        let grid = match self.snr_db.as_ref().ok_or_else(|| CliError::Config("no SNR grid given".into()))? {
            SnrSpec::List(v) => v.clone(),
            SnrSpec::Range { start, stop, step } => range(*start, *stop, *step)?,
            SnrSpec::Text(s) => parse_snr(s)?,
        };
        if grid.is_empty() {
            return Err(CliError::Config("empty SNR grid".into()));
        }
        if grid.iter().any(|v| !v.is_finite()) || grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CliError::Config("SNR grid must be finite and strictly increasing".into()));
        }
        Ok(grid)
    }

    pub fn single_snr(&self) -> Result<f64, CliError> {
        match self.snr_grid()?.as_slice() {
            [v] => Ok(*v),
            _ => Err(CliError::Config("this command takes a single SNR".into())),
        }
    }
}

/// Preset name, `two_tap(q)`, a JSON array, or a path to a file holding one.
pub fn parse_channel(spec: &str) -> Result<ChannelResponse, CliError> {
    let s = spec.trim();
    match s {
        "channel_b" => return Ok(ChannelResponse::channel_b()),
        "jeong" => return Ok(ChannelResponse::jeong()),
        "jeong_spaced" => return Ok(ChannelResponse::jeong_spaced()),
        _ => {}
    }
    if let Some(q) = s.strip_prefix("two_tap(").and_then(|r| r.strip_suffix(')')) {
        let q: f64 = q.trim().parse().map_err(|_| CliError::Config(format!("bad two_tap parameter in '{s}'")))?;
        return Ok(ChannelResponse::two_tap(q)?);
    }
    if s.starts_with('[') {
        return Ok(ChannelResponse::from_json(s)?);
    }
    let text = std::fs::read_to_string(s).map_err(|e| CliError::Config(format!("channel '{s}': {e}")))?;
    Ok(ChannelResponse::from_json(&text)?)
}

/// Preset, inline JSON, or a path to a JSON file.
pub fn parse_input(spec: &str) -> Result<InputDistribution, CliError> {
    let s = spec.trim();
    if Path::new(s).is_file() {
        let text = std::fs::read_to_string(s).map_err(|e| CliError::Config(format!("input '{s}': {e}")))?;
        return Ok(InputDistribution::parse(&text)?);
    }
    Ok(InputDistribution::parse(s)?)
}

/// `a:b:step` (inclusive), a comma list, or a single value.
pub fn parse_snr(s: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Config(format!("bad SNR grid '{s}'"));
    let num = |t: &str| t.trim().parse::<f64>().map_err(|_| bad());
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [a, b, step] => range(num(a)?, num(b)?, num(step)?),
        [_] => s.split(',').map(num).collect(),
        _ => Err(bad()),
    }
}

fn range(start: f64, stop: f64, step: f64) -> Result<Vec<f64>, CliError> {
    if !(step > 0.0) || !(stop >= start) {
        return Err(CliError::Config(format!("SNR range {start}:{stop}:{step} is not increasing")));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    // round to the step's resolution so 0.1-steps print cleanly
    Ok((0..=n).map(|i| ((start + i as f64 * step) * 1e9).round() / 1e9).collect())
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}
