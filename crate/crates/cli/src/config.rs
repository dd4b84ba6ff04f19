use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use srnn::network::NetworkSpec;
use srnn::tasks::{PatternParams, StreamParams, TaskKind};
use srnn::train::{LossKind, TrainingConfig};

use crate::Failure;

pub const CONFIG_VERSION: &str = "srnn-config/1";

/// A training run. Relative paths inside the file resolve against the
/// directory holding it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: String,
    pub network: NetworkSpec,
    pub training: TrainingConfig,
    pub task: TaskConfig,
    #[serde(default)]
    pub outputs: Outputs,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    pub dir: PathBuf,
}

impl Default for Outputs {
    fn default() -> Self {
        Outputs { dir: PathBuf::from("out") }
    }
}

fn default_split() -> [f64; 3] {
    [0.72, 0.08, 0.2]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    pub source: TaskSource,
    /// Seeds generation and the split.
    #[serde(default)]
    pub seed: u64,
    /// Train, validation and test fractions.
    #[serde(default = "default_split")]
    pub split: [f64; 3],
    #[serde(default)]
    pub encoding: Option<Encoding>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskSource {
    Pattern(PatternParams),
    Streaming(StreamParams),
    /// A dataset manifest written by `gen` or by hand.
    Manifest(PathBuf),
    Idx(IdxPaths),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdxPaths {
    pub images: PathBuf,
    pub labels: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Encoding {
    /// Z-score (fitted on the train split), then up/down level crossing.
    LevelCrossing { l_plus: f64, l_minus: f64 },
}

impl TaskConfig {
    pub fn validate(&self) -> Result<(), Failure> {
        let [a, b, c] = self.split;
        if [a, b, c].iter().any(|r| r.is_nan() || *r < 0.0) || ((a + b + c) - 1.0).abs() > 1e-9 {
            return Err(Failure::Usage(format!("task.split {:?} must be non-negative and sum to 1", self.split)));
        }
        if let Some(Encoding::LevelCrossing { l_plus, l_minus }) = self.encoding {
            if !(l_plus > 0.0 && l_minus > 0.0) {
                return Err(Failure::Usage("level-crossing thresholds must be positive".into()));
            }
        }
        Ok(())
    }

    /// Task kind when it is known without reading data files.
    pub fn kind(&self) -> Option<TaskKind> {
        match self.source {
            TaskSource::Pattern(_) | TaskSource::Idx(_) => Some(TaskKind::SequenceClassification),
            TaskSource::Streaming(_) => Some(TaskKind::Streaming),
            TaskSource::Manifest(_) => None,
        }
    }

    fn resolve(&mut self, base: &Path) {
        match &mut self.source {
            TaskSource::Manifest(p) => *p = base.join(&*p),
            TaskSource::Idx(i) => {
                i.images = base.join(&i.images);
                i.labels = base.join(&i.labels);
            }
            _ => {}
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), Failure> {
        if self.version != CONFIG_VERSION {
            return Err(Failure::Usage(format!(
                "unsupported config version {:?}, expected {CONFIG_VERSION:?}",
                self.version
            )));
        }
        self.network.validate()?;
        self.training.validate()?;
        self.task.validate()?;
        let expected = match self.task.kind() {
            Some(TaskKind::Streaming) => Some(LossKind::NllStreaming),
            Some(TaskKind::SequenceClassification) => Some(LossKind::Ce),
            None => None,
        };
        if let Some(loss) = expected {
            if loss != self.training.loss {
                return Err(Failure::Usage(format!(
                    "training.loss {:?} does not fit the task; use {loss:?}",
                    self.training.loss
                )));
            }
        }
        Ok(())
    }

    /// Override the network initialization and shuffling seeds.
    pub fn reseed(&mut self, seed: u64) {
        self.network.seed = seed;
        self.training.seed = seed;
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))
}

fn base_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn parse<T: serde::de::DeserializeOwned>(text: &str, path: &Path) -> Result<T, Failure> {
    serde_json::from_str(text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

pub fn load_run_config(path: &Path) -> Result<RunConfig, Failure> {
    let mut cfg: RunConfig = parse(&read(path)?, path)?;
    let base = base_dir(path);
    cfg.task.resolve(&base);
    cfg.outputs.dir = base.join(&cfg.outputs.dir);
    cfg.validate()?;
    Ok(cfg)
}

/// A task section alone, or the task of a full run config.
pub fn load_task_config(path: &Path) -> Result<TaskConfig, Failure> {
    let text = read(path)?;
    let value: serde_json::Value = parse(&text, path)?;
    if value.get("version").is_some() {
        return Ok(load_run_config(path)?.task);
    }
    let mut task: TaskConfig = parse(&text, path)?;
    task.resolve(&base_dir(path));
    task.validate()?;
    Ok(task)
}
