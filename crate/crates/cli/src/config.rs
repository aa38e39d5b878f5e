//! Run configuration: a TOML file merged with command-line overrides.

use std::path::{Path, PathBuf};

use nah_core::cesm::EsmConfig;
use nah_core::metrics::NccMode;
use nah_core::model::UnetConfig;
use nah_core::train::{FinetuneConfig, PretrainConfig};
use nah_core::NahConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "NAHLAB_OUT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataParams {
    pub rect_count: usize,
    pub ood_count: usize,
    /// Lowest modes kept per plate; all modes up to the frequency cap if unset.
    pub modes_per_plate: Option<usize>,
    pub seed: u64,
    pub noise_snr_db: Option<f64>,
}

impl Default for DataParams {
    fn default() -> Self {
        DataParams {
            rect_count: 500,
            ood_count: 100,
            modes_per_plate: Some(6),
            seed: 1,
            noise_snr_db: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub geometry: NahConfig,
    pub data: DataParams,
    pub model: UnetConfig,
    /// Network initialization seed.
    pub model_seed: u64,
    pub pretrain: PretrainConfig,
    pub finetune: FinetuneConfig,
    pub esm: EsmConfig,
    pub ncc_mode: NccMode,
    pub out_root: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            geometry: NahConfig::default(),
            data: DataParams::default(),
            model: UnetConfig::default(),
            model_seed: 0,
            pretrain: PretrainConfig::default(),
            finetune: FinetuneConfig::default(),
            esm: EsmConfig::default(),
            ncc_mode: NccMode::Modulus,
            out_root: std::env::var_os(OUT_ENV).map_or_else(|| PathBuf::from("runs"), PathBuf::from),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.geometry.validate()?;
        self.model.validate()?;
        self.esm.validate()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg: RunConfig = toml::from_str("model_seed = 7\n[finetune]\nepochs = 12\n").unwrap();
        assert_eq!(cfg.model_seed, 7);
        assert_eq!(cfg.finetune.epochs, 12);
        assert_eq!(cfg.finetune.lr_net, 1e-3);
        assert_eq!(cfg.geometry, NahConfig::default());
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = RunConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(toml::from_str::<RunConfig>(&text).unwrap(), cfg);
    }

    #[test]
    fn unknown_values_are_config_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "model_seed = \"x\"\n").unwrap();
        assert_eq!(RunConfig::load(Some(&p)).unwrap_err().code, 2);
    }
}
