//! Flat `key = value` run configuration.

use std::path::Path;

use crate::error::{Error, Result};
use crate::loss::LossWeights;
use crate::model::{ModelConfig, Variant};
use crate::qsim::QuantumLayerConfig;
use crate::train::TrainConfig;

pub const SEED_ENV: &str = "HQCM_SEED";
pub const DEFAULT_SEED: u64 = 42;

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub conv_channels: [usize; 3],
    pub reduction_ratio: usize,
    pub quantum: QuantumLayerConfig,
    pub variant: Variant,
    /// `None` keeps the dataset's native size.
    pub image_size: Option<usize>,
    /// `None` falls back to `HQCM_SEED`, then [`DEFAULT_SEED`].
    pub seed: Option<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let model = ModelConfig::default();
        RunConfig {
            train: TrainConfig::default(),
            conv_channels: model.conv_channels,
            reduction_ratio: model.reduction_ratio,
            quantum: model.quantum,
            variant: model.variant,
            image_size: None,
            seed: None,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("invalid value `{value}` for `{key}` (expected true/false)"))),
    }
}

impl RunConfig {
    pub const KEYS: [&'static str; 22] = [
        "epochs",
        "batch_size",
        "learning_rate",
        "weight_decay",
        "clip_norm",
        "plateau_factor",
        "plateau_patience",
        "early_stopping_patience",
        "alpha",
        "beta",
        "zeta",
        "gamma",
        "dice_eps",
        "augment",
        "qubits",
        "depth",
        "circuits",
        "conv_channels",
        "reduction_ratio",
        "variant",
        "image_size",
        "seed",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let t = &mut self.train;
        let w: &mut LossWeights = &mut t.loss;
        match key {
            "epochs" => t.epochs = parse(key, value)?,
            "batch_size" => t.batch_size = parse(key, value)?,
            "learning_rate" => t.learning_rate = parse(key, value)?,
            "weight_decay" => t.weight_decay = parse(key, value)?,
            "clip_norm" => t.clip_norm = parse(key, value)?,
            "plateau_factor" => t.plateau_factor = parse(key, value)?,
            "plateau_patience" => t.plateau_patience = parse(key, value)?,
            "early_stopping_patience" => t.early_stopping_patience = parse(key, value)?,
            "alpha" => w.alpha = parse(key, value)?,
            "beta" => w.beta = parse(key, value)?,
            "zeta" => w.zeta = parse(key, value)?,
            "gamma" => w.gamma = parse(key, value)?,
            "dice_eps" => w.dice_eps = parse(key, value)?,
            "augment" => t.augment = parse_bool(key, value)?,
            "qubits" => self.quantum.qubits = parse(key, value)?,
            "depth" => self.quantum.depth = parse(key, value)?,
            "circuits" => self.quantum.circuits = parse(key, value)?,
            "conv_channels" => {
                let parts: Vec<usize> = value
                    .split(',')
                    .map(|p| parse(key, p.trim()))
                    .collect::<Result<_>>()?;
                self.conv_channels = parts
                    .try_into()
                    .map_err(|_| Error::Config("`conv_channels` needs exactly three values".into()))?;
            }
            "reduction_ratio" => self.reduction_ratio = parse(key, value)?,
            "variant" => self.variant = value.parse()?,
            "image_size" => {
                self.image_size = if value == "auto" { None } else { Some(parse(key, value)?) };
            }
            "seed" => self.seed = Some(parse(key, value)?),
            _ => return Err(Error::Config(format!("unknown configuration key `{key}`"))),
        }
        Ok(())
    }

    /// `key = value` per line; `#` starts a comment.
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }

    /// Applies `key=value` overrides.
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<()> {
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{o}` is not key=value")))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn resolved_seed(&self) -> Result<u64> {
        if let Some(s) = self.seed {
            return Ok(s);
        }
        match std::env::var(SEED_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV}=`{v}` is not an unsigned integer"))),
            Err(_) => Ok(DEFAULT_SEED),
        }
    }

    pub fn model_config(&self, input_size: usize, num_classes: usize) -> ModelConfig {
        ModelConfig {
            input_size,
            num_classes,
            conv_channels: self.conv_channels,
            reduction_ratio: self.reduction_ratio,
            quantum: self.quantum,
            variant: self.variant,
        }
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let mut t = self.train.clone();
        t.seed = self.resolved_seed()?;
        t.validate()?;
        Ok(t)
    }
}
