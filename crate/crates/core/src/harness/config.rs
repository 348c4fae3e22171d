use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::augment::MixParams;
use crate::classifier::{MlpTopology, SgdHyper};
use crate::datacube::SplitFractions;
use crate::error::{HsiError, Result};
use crate::features::FeatureConfig;
use crate::mdae::MdaeParams;

/// Corruption probability used by network 7.
pub const NETWORK7_P: f64 = 0.005;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub seed: u64,
    pub fractions: SplitFractions,
    /// Explicit train/val totals; overrides `fractions` when present.
    pub counts: Option<SplitCounts>,
}

impl SplitConfig {
    pub fn resolve(&self, labeled_total: usize) -> Result<SplitFractions> {
        match &self.counts {
            Some(c) => SplitFractions::from_counts(c.train, c.val, labeled_total),
            None => Ok(self.fractions),
        }
    }
}

/// Every field has a default; see the README for the values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub dataset: PathBuf,
    pub split: SplitConfig,
    pub mdae: MdaeParams,
    pub mix: MixParams,
    pub hidden: Vec<usize>,
    pub sgd: SgdHyper,
    pub network_id: u8,
    /// Include the all-class model in the MSE block.
    pub mse_include_all: bool,
    /// Also train the MDAEs on augmented (mixed) spectra.
    pub mdae_use_augmented: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: PathBuf::new(),
            split: SplitConfig::default(),
            mdae: MdaeParams::default(),
            mix: MixParams::default(),
            hidden: MlpTopology::default_hidden(),
            sgd: SgdHyper::default(),
            network_id: 6,
            mse_include_all: true,
            mdae_use_augmented: false,
        }
    }
}

impl ExperimentConfig {
    /// Parses a JSON config; a relative `dataset` is resolved against the
    /// config file's directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| {
            HsiError::InvalidConfig(format!("cannot read {}: {e}", path.display()))
        })?;
        let mut cfg: Self = serde_json::from_str(&text)?;
        if cfg.dataset.is_relative() && !cfg.dataset.as_os_str().is_empty() {
            if let Some(parent) = path.parent() {
                cfg.dataset = parent.join(&cfg.dataset);
            }
        }
        Ok(cfg)
    }

    pub fn flags(&self) -> Result<NetworkFlags> {
        NetworkFlags::for_network(self.network_id)
    }

    /// MDAE parameters after the network's overrides.
    pub fn effective_mdae(&self) -> Result<MdaeParams> {
        let flags = self.flags()?;
        Ok(MdaeParams {
            p: flags.p_override.unwrap_or(self.mdae.p),
            ..self.mdae
        })
    }

    pub fn feature_config(&self, n_classes: usize) -> Result<FeatureConfig> {
        let flags = self.flags()?;
        Ok(FeatureConfig {
            use_raw: true,
            use_mdae_outputs: flags.mdae_outputs,
            use_mse: flags.mse,
            mse_include_all: self.mse_include_all,
            n_classes,
        })
    }

    pub fn with_network(&self, network_id: u8) -> Self {
        Self {
            network_id,
            ..self.clone()
        }
    }
}

/// Component switches of the seven ablation networks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkFlags {
    pub augment: bool,
    pub mdae_outputs: bool,
    pub mse: bool,
    pub p_override: Option<f64>,
}

impl NetworkFlags {
    /// 1 raw only, 2 +augmentation, 3 +MDAE outputs, 4 +MSE, 5 MDAE+MSE,
    /// 6 augmentation+MDAE+MSE, 7 network 6 with p = 0.005.
    pub fn for_network(id: u8) -> Result<Self> {
        let (augment, mdae_outputs, mse, p_override) = match id {
            1 => (false, false, false, None),
            2 => (true, false, false, None),
            3 => (false, true, false, None),
            4 => (false, false, true, None),
            5 => (false, true, true, None),
            6 => (true, true, true, None),
            7 => (true, true, true, Some(NETWORK7_P)),
            _ => {
                return Err(HsiError::InvalidConfig(format!(
                    "network_id {id} outside 1..=7"
                )))
            }
        };
        Ok(Self {
            augment,
            mdae_outputs,
            mse,
            p_override,
        })
    }

    pub fn needs_mdae(&self) -> bool {
        self.mdae_outputs || self.mse
    }
}
