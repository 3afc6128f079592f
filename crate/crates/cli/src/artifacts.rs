//! Files written next to a run: manifest, summary and plain text outputs.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use rdrop::experiment::conf;
use rdrop::trainer::{TrainConfig, TrainOutcome};
use serde_json::{json, Map, Value};

/// `v<crate version>-g<git describe>`, or just the crate version outside a
/// checkout.
pub const VERSION: &str = env!("RDROP_VERSION");

pub fn unix_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

pub fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

pub fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}

fn config_object(config: &TrainConfig) -> Value {
    let map: Map<String, Value> = conf::KEYS
        .iter()
        .map(|k| {
            let v = conf::get(config, k).expect("every listed key has a value");
            (k.to_string(), Value::String(v))
        })
        .collect();
    Value::Object(map)
}

/// Provenance of one `train` invocation. Written once before training and
/// rewritten with the end time and final file list afterwards.
pub struct RunManifest {
    pub path: PathBuf,
    pub config: TrainConfig,
    pub started_ms: u64,
    pub finished_ms: Option<u64>,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    pub fn new(dir: &Path, config: &TrainConfig, outputs: Vec<PathBuf>) -> Self {
        Self {
            path: dir.join("manifest.json"),
            config: config.clone(),
            started_ms: unix_ms(),
            finished_ms: None,
            outputs,
        }
    }

    pub fn to_json(&self) -> Value {
        json!({
            "version": VERSION,
            "seed": self.config.seed,
            "started_unix_ms": self.started_ms,
            "finished_unix_ms": self.finished_ms,
            "config": config_object(&self.config),
            "outputs": self.outputs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
        })
    }

    pub fn save(&self) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.to_json())?;
        write(&self.path, text + "\n")
    }
}

/// Flat key-value summary of a finished run.
pub fn summary(config: &TrainConfig, outcome: &TrainOutcome, wall_ms: Option<u64>) -> Value {
    let best = outcome
        .metrics
        .iter()
        .min_by(|a, b| a.valid_loss.total_cmp(&b.valid_loss));
    json!({
        "task": config.task.as_str(),
        "mode": config.mode.as_str(),
        "seed": config.seed,
        "steps": outcome.trace.len(),
        "stopped_early": outcome.stopped_early,
        "final_train_loss": outcome.final_train.loss,
        "final_train_metric": outcome.final_train.metric,
        "final_valid_loss": outcome.final_valid.loss,
        "final_valid_metric": outcome.final_valid.metric,
        "best_valid_loss": best.map(|m| m.valid_loss),
        "best_step": best.map(|m| m.step),
        "wall_ms": wall_ms,
    })
}
