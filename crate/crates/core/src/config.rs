//! Run configuration: one JSON file, with command-line overrides applied on top.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{default_profiles, ChannelProfile};
use crate::error::{Error, Result};
use crate::lfa::LfaConfig;
use crate::trainer::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    /// Synthetic generation and sparsity masking.
    pub data: u64,
    /// Train/valid/test partition.
    pub split: u64,
    /// Parameter init, shuffling and ε draws.
    pub model: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub k: usize,
    pub n_days: usize,
    pub m_slots: usize,
    /// Per-channel profiles; defaults to [`default_profiles`] when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub channels: Option<Vec<ChannelProfile>>,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            k: 3,
            n_days: 21,
            m_slots: 1440,
            channels: None,
        }
    }
}

impl SyntheticConfig {
    pub fn profiles(&self) -> Vec<ChannelProfile> {
        self.channels.clone().unwrap_or_else(|| default_profiles(self.k))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradCheckConfig {
    pub configs: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self { configs: 100, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Dataset manifest; exclusive with `synthetic`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticConfig>,
    /// Fraction of all tensor cells kept as known entries.
    pub density: f64,
    pub seeds: Seeds,
    pub train: TrainConfig,
    pub lfa: LfaConfig,
    pub grad_check: GradCheckConfig,
    pub out_dir: PathBuf,
    /// Label used in reports; defaults to the dataset source and density.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset_label: Option<String>,
    /// Write measured epoch times instead of zeros in epoch logs.
    pub record_wall_time: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            manifest: None,
            synthetic: None,
            density: 1.0,
            seeds: Seeds::default(),
            train: TrainConfig::default(),
            lfa: LfaConfig::default(),
            grad_check: GradCheckConfig::default(),
            out_dir: PathBuf::from("out"),
            dataset_label: None,
            record_wall_time: false,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::Config(format!("{path}: {}", e.into_inner()))
        })?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// The synthetic block, or the default one when no source is configured.
    pub fn synthetic_or_default(&self) -> Option<SyntheticConfig> {
        match (&self.manifest, &self.synthetic) {
            (None, None) => Some(SyntheticConfig::default()),
            (_, s) => s.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.manifest.is_some() && self.synthetic.is_some() {
            return Err(Error::Config(
                "manifest, synthetic: exactly one dataset source may be set".into(),
            ));
        }
        if !(self.density > 0.0 && self.density <= 1.0) {
            return Err(Error::Config(format!("density: {} is outside (0, 1]", self.density)));
        }
        if let Some(s) = &self.synthetic {
            if s.k == 0 || s.n_days == 0 || s.m_slots == 0 {
                return Err(Error::Config("synthetic: k, n_days and m_slots must be positive".into()));
            }
            if let Some(ch) = &s.channels {
                if ch.len() != s.k {
                    return Err(Error::Config(format!(
                        "synthetic.channels: {} profiles for k = {}",
                        ch.len(),
                        s.k
                    )));
                }
            }
        }
        self.train.validate()?;
        self.lfa.validate()?;
        if self.grad_check.configs == 0 {
            return Err(Error::Config("grad_check.configs: must be >= 1".into()));
        }
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seeds.model,
            ..self.train
        }
    }

    pub fn lfa_config(&self) -> LfaConfig {
        LfaConfig {
            seed: self.seeds.model,
            ..self.lfa
        }
    }

    /// Seed for sparsity masking, decorrelated from the generator seed.
    pub fn mask_seed(&self) -> u64 {
        self.seeds.data ^ 0x9E37_79B9_7F4A_7C15
    }
}
