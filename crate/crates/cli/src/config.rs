//! Run configuration: one TOML (or JSON) file per run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use slimnas_core::datasets::DatasetSpec;
use slimnas_core::supernet::TrainConfig;
use slimnas_core::{ArchConfig, BackboneSkeleton, EvolutionParams, HardwareConstraints};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvaluatorKind {
    #[default]
    Supernet,
    Surrogate,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluatorConfig {
    #[serde(default)]
    pub kind: EvaluatorKind,
    /// Seed of the surrogate's coefficients; ignored in supernet mode.
    #[serde(default)]
    pub surrogate_seed: u64,
}

fn default_workers() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub skeleton: BackboneSkeleton,
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub train: TrainConfig,
    /// Schedule for from-scratch retraining; defaults to `train`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retrain: Option<TrainConfig>,
    #[serde(default)]
    pub constraints: HardwareConstraints,
    #[serde(default)]
    pub evolution: EvolutionParams,
    #[serde(default)]
    pub evaluator: EvaluatorConfig,
    /// Baseline architecture F0; defaults to full width, or a feasible
    /// random sample when full width violates the constraints.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Evaluator threads for search and parallel retraining.
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub record_wall_time: bool,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let is_json = path.extension().is_some_and(|e| e == "json");
        let cfg = if is_json {
            Self::from_json(&text)
        } else {
            Self::from_toml(&text)
        }
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let sk = &self.skeleton;
        sk.validate()?;
        self.dataset.validate()?;
        self.train.validate()?;
        if let Some(r) = &self.retrain {
            r.validate().map_err(|e| CliError::Config(format!("retrain: {e}")))?;
        }
        self.constraints.validate()?;
        self.evolution.validate()?;
        if sk.searchable_count() == 0 {
            return Err(CliError::Config("skeleton has no searchable layers".into()));
        }
        let d = &self.dataset;
        if (d.channels, d.height, d.width) != (sk.input_channels, sk.input_height, sk.input_width) {
            return Err(CliError::Config(format!(
                "dataset images are {}x{}x{} but the skeleton expects {}x{}x{}",
                d.channels, d.height, d.width, sk.input_channels, sk.input_height, sk.input_width
            )));
        }
        if d.num_classes != sk.num_classes {
            return Err(CliError::Config(format!(
                "dataset has {} classes but the skeleton head has {}",
                d.num_classes, sk.num_classes
            )));
        }
        if let Some(b) = &self.baseline {
            ArchConfig::decode(b, sk).map_err(|e| CliError::Config(format!("baseline: {e}")))?;
        }
        Ok(())
    }

    /// The configuration echoed into run headers: everything that determines
    /// the result, without execution knobs or the output location.
    pub fn effective(&self) -> serde_json::Value {
        let explicit = RunConfig {
            retrain: Some(self.retrain_config()),
            ..self.clone()
        };
        let mut v = serde_json::to_value(explicit).expect("config serializes");
        if let Some(map) = v.as_object_mut() {
            for key in ["output_dir", "workers", "record_wall_time"] {
                map.remove(key);
            }
        }
        v
    }

    pub fn retrain_config(&self) -> TrainConfig {
        self.retrain.clone().unwrap_or_else(|| self.train.clone())
    }

    pub fn baseline(&self) -> Option<ArchConfig> {
        self.baseline
            .as_deref()
            .map(|b| ArchConfig::decode(b, &self.skeleton).expect("validated at load"))
    }
}
