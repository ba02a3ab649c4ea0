use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{HarnessError, SplitSpec};
use crate::nn::{ModelConfig, TrainConfig};

/// Everything a cross-validation run needs besides the data.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub split: SplitSpec,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        self.model.validate()?;
        self.train.validate()?;
        self.split.validate()
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let cfg: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<(), HarnessError> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}
