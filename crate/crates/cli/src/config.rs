//! Run configuration: a JSON file whose fields command-line flags override.

use std::path::{Path, PathBuf};

use din_core::optim::{Loss, TrainConfig};
use din_core::sampler::FootprintSampleConfig;
use din_core::sdf::{SdfTarget, Shape};
use din_core::Error;
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum TaskId {
    Image,
    Sampler,
    Ggx,
    Sdf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum QuantizeMode {
    #[default]
    None,
    U8,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub task: Option<TaskId>,
    /// Image, or material manifest (`.json`).
    pub input: Option<PathBuf>,
    pub compression: Option<f64>,
    pub budget_bytes: Option<u64>,
    pub rho: Option<f64>,
    pub cascaded_dims: Option<usize>,
    pub epochs: Option<usize>,
    pub shape: Option<Shape>,
    pub footprint: Option<FootprintSampleConfig>,
    pub ignore_footprint: Option<bool>,
    pub near_samples: Option<usize>,
    pub sdf_target: Option<SdfTarget>,
    pub loss: Option<Loss>,
    #[serde(default)]
    pub quantize: QuantizeMode,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    /// Partial training settings layered over the task's defaults.
    pub train: Option<Value>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read(path)?;
        serde_json::from_slice(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Ensures a config file written for another task is not reused by
    /// mistake.
    pub fn expect_task(&self, task: TaskId) -> Result<(), Error> {
        match self.task {
            Some(t) if t != task => Err(Error::Config(format!("config is for task {t:?}, not {task:?}"))),
            _ => Ok(()),
        }
    }

    /// Task defaults, then the file's `train` object, then `seed`.
    pub fn train_config(&self, defaults: TrainConfig) -> Result<TrainConfig, Error> {
        let mut merged = serde_json::to_value(defaults).expect("serializable");
        if let Some(overrides) = &self.train {
            let Value::Object(fields) = overrides else {
                return Err(Error::Config("`train` must be an object".into()));
            };
            let target = merged.as_object_mut().expect("object");
            for (k, v) in fields {
                target.insert(k.clone(), v.clone());
            }
        }
        let mut cfg: TrainConfig =
            serde_json::from_value(merged).map_err(|e| Error::Config(format!("train: {e}")))?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
