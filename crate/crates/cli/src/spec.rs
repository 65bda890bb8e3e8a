//! JSON run specification: model structure, training settings, dataset path.
//!
//! Model structure lives in the config file because per-block dimension
//! lists are unwieldy as flags; the command line only carries paths, seeds,
//! and overrides.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use cubemix::layers::{Activation, BlockSpec, CubeMLPConfig, HeadConfig};
use cubemix::tensor3::Shape3;
use cubemix::trainer::{LossKind, OptimizerKind, TrainConfig};
use cubemix::{Error, Result};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub model: ModelSpec,
    #[serde(default)]
    pub train: TrainSpec,
    #[serde(default)]
    pub dataset: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    /// Input extents as [sequence, modality, channel].
    pub input: [usize; 3],
    pub blocks: Vec<BlockSpecJson>,
    #[serde(default)]
    pub activation: Activation,
    #[serde(default)]
    pub head_hidden: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockSpecJson {
    /// Output extents as [sequence, modality, channel].
    pub out: [usize; 3],
    /// Unit enable flags as [sequence, modality, channel].
    #[serde(default = "all_enabled")]
    pub units: [bool; 3],
}

fn all_enabled() -> [bool; 3] {
    [true, true, true]
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSpec {
    pub lr0: Option<f64>,
    pub lr_decay: Option<f64>,
    pub decay_every: Option<usize>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub loss: Option<LossKind>,
    pub optimizer: Option<OptimizerKind>,
    pub seed: Option<u64>,
}

impl RunSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        let spec: RunSpec = serde_json::from_str(&text)
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        Ok(spec)
    }

    pub fn model_config(&self) -> Result<CubeMLPConfig> {
        let [l, m, d] = self.model.input;
        let input = Shape3::new(l, m, d).map_err(|e| Error::config(e.to_string()))?;
        let blocks: Vec<BlockSpec> = self
            .model
            .blocks
            .iter()
            .map(|b| BlockSpec {
                out_dims: (b.out[0], b.out[1], b.out[2]),
                enabled: (b.units[0], b.units[1], b.units[2]),
            })
            .collect();
        let head = HeadConfig {
            hidden_dim: self.model.head_hidden,
            activation: self.model.activation,
        };
        CubeMLPConfig::build(input, &blocks, self.model.activation, head)
    }

    /// Training config with the seed already resolved (flag beats config
    /// beats the `CUBEMIX_SEED` environment fallback beats zero).
    pub fn train_config(&self, seed_override: Option<u64>) -> Result<TrainConfig> {
        let defaults = TrainConfig::default();
        let seed = resolve_seed(seed_override, self.train.seed)?;
        let cfg = TrainConfig {
            lr0: self.train.lr0.unwrap_or(defaults.lr0),
            lr_decay: self.train.lr_decay.unwrap_or(defaults.lr_decay),
            decay_every: self.train.decay_every.unwrap_or(defaults.decay_every),
            epochs: self.train.epochs.unwrap_or(defaults.epochs),
            batch_size: self.train.batch_size.unwrap_or(defaults.batch_size),
            loss: self.train.loss.unwrap_or(defaults.loss),
            optimizer: self.train.optimizer.unwrap_or(defaults.optimizer),
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn dataset_path(&self) -> Result<&Path> {
        self.dataset
            .as_deref()
            .ok_or_else(|| Error::config("config has no dataset path"))
    }
}

/// Seed precedence: explicit flag, then config value, then `CUBEMIX_SEED`,
/// then zero.
pub fn resolve_seed(flag: Option<u64>, config: Option<u64>) -> Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    if let Some(s) = config {
        return Ok(s);
    }
    match std::env::var("CUBEMIX_SEED") {
        Ok(text) => text
            .parse()
            .map_err(|_| Error::config(format!("CUBEMIX_SEED is not a valid seed: {text:?}"))),
        Err(_) => Ok(0),
    }
}
