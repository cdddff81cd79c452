use std::path::{Path, PathBuf};

use anyhow::Context;
use mipt_core::circuit::{EngineKind, StepOrder};
use mipt_core::ensemble::{SweepConfig, SweepGrid};
use mipt_core::mps::TruncationPolicy;
use serde::{Deserialize, Serialize};

fn default_magic_samples() -> usize {
    mipt_core::magic::DEFAULT_MAGIC_SAMPLES
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_true() -> bool {
    true
}

/// Contents of a run configuration file.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: SweepGrid,
    #[serde(default = "default_engine")]
    pub engine: EngineKind,
    #[serde(default)]
    pub truncation: TruncationPolicy,
    #[serde(default = "default_magic_samples")]
    pub magic_samples: usize,
    #[serde(default)]
    pub master_seed: u64,
    pub workers: Option<usize>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_true")]
    pub brickwork: bool,
    #[serde(default)]
    pub step_order: StepOrder,
}

fn default_engine() -> EngineKind {
    EngineKind::Mps
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(crate::InvalidInput::from)
            .with_context(|| format!("parsing config {}", path.display()))?;
        Ok(cfg)
    }

    pub fn sweep(&self) -> SweepConfig {
        SweepConfig {
            grid: self.grid.clone(),
            engine: self.engine,
            truncation: self.truncation,
            magic_samples: self.magic_samples,
            master_seed: self.master_seed,
            brickwork: self.brickwork,
            step_order: self.step_order,
        }
    }
}

/// Worker count: flag (or `MIPT_WORKERS`, folded into the flag by clap), then
/// the config file, then the number of available cores.
pub fn resolve_workers(flag: Option<usize>, file: Option<usize>) -> anyhow::Result<usize> {
    let w = flag
        .or(file)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if w == 0 {
        return Err(mipt_core::Error::InvalidParam {
            field: "workers",
            reason: "must be at least 1".into(),
        }
        .into());
    }
    Ok(w)
}
