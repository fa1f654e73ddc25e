//! JSON run configuration. Every section defaults to the library defaults;
//! command-line flags override whatever the file sets.

use std::path::Path;

use anyhow::Context;
use icelut::engine::DEFAULT_WORKING_SIZE;
use icelut::{ModelConfig, QuantSpec, TrainConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSettings {
    pub repeats: usize,
    pub warmup: usize,
}

impl Default for BenchSettings {
    fn default() -> Self {
        let d = icelut::engine::BenchOptions::default();
        Self {
            repeats: d.repeats,
            warmup: d.warmup,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSettings {
    pub count: usize,
    pub size: usize,
    pub transform: String,
    pub grain: f64,
}

impl Default for SynthSettings {
    fn default() -> Self {
        Self {
            count: 50,
            size: 64,
            transform: "gamma:0.8+channel-mix".into(),
            grain: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Overrides `train.seed` and seeds dataset synthesis when set.
    pub seed: Option<u64>,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub quant: QuantSpec,
    /// Side of the square working image used at inference; defaults to 32.
    pub working_size: Option<usize>,
    pub bench: BenchSettings,
    pub synth: SynthSettings,
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(self.train.seed)
    }

    pub fn working_size(&self) -> usize {
        self.working_size.unwrap_or(DEFAULT_WORKING_SIZE)
    }
}
