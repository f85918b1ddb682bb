//! The TOML run configuration shared by all subcommands.

use std::path::{Path, PathBuf};

use hgn::losses::LossWeights;
use hgn::netcore::{GradCheckConfig, NetworkConfig};
use hgn::synthgen::SynthConfig;
use hgn::trainer::{Mode, TrainConfig};
use hgn::{HgnError, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Dataset evaluated after every training epoch.
    pub validation: Option<PathBuf>,
}

/// Finite-difference check on a toy network and a handful of tiny samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradCheckSection {
    /// Parameters probed; all of them when the network is smaller.
    pub samples: usize,
    pub step: f64,
    pub rel_tol: f64,
    pub abs_floor: f64,
    pub network: NetworkConfig,
    pub synth: SynthConfig,
}

impl Default for GradCheckSection {
    fn default() -> Self {
        let c = GradCheckConfig::default();
        Self {
            samples: c.samples,
            step: c.step,
            rel_tol: c.rel_tol,
            abs_floor: c.abs_floor,
            network: NetworkConfig {
                input_height: 8,
                input_width: 12,
                widths: vec![3, 4],
                head_hidden: 5,
                radius_init: 3.0,
                ..Default::default()
            },
            synth: SynthConfig {
                height: 8,
                width: 12,
                radius_range: [2.5, 3.5],
                center_jitter: 0.5,
                count: 3,
                reallike_fraction: 0.34,
                ..Default::default()
            },
        }
    }
}

impl GradCheckSection {
    pub fn check(&self, seed: u64) -> GradCheckConfig {
        GradCheckConfig { samples: self.samples, step: self.step, rel_tol: self.rel_tol, abs_floor: self.abs_floor, seed }
    }
}

/// Mode matrix trained under one budget and evaluated on a test profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblateSection {
    pub modes: Vec<Mode>,
    pub seeds: Vec<u64>,
    /// Test profile; the training profile with another seed when absent.
    pub eval_synth: Option<SynthConfig>,
    pub test_count: usize,
}

impl Default for AblateSection {
    fn default() -> Self {
        Self { modes: vec![Mode::B, Mode::BU, Mode::Hgn, Mode::HgnUm], seeds: vec![0, 1, 2], eval_synth: None, test_count: 200 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Overrides `train.mode`.
    pub mode: Option<Mode>,
    pub precision: Precision,
    pub synth: SynthConfig,
    pub network: NetworkConfig,
    pub train: TrainConfig,
    /// Overrides `train.loss`.
    pub loss: Option<LossWeights>,
    pub data: DataSection,
    pub gradcheck: GradCheckSection,
    pub ablate: AblateSection,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut cfg: Self = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)?;
                toml::from_str(&text).map_err(|e| HgnError::Config(format!("{}: {e}", p.display())))?
            }
            None => Self::default(),
        };
        if let Some(m) = cfg.mode {
            cfg.train.mode = m;
        }
        if let Some(l) = cfg.loss {
            cfg.train.loss = l;
        }
        cfg.mode = Some(cfg.train.mode);
        cfg.loss = Some(cfg.train.loss);
        Ok(cfg)
    }

    pub fn network_for(&self, mode: Mode) -> NetworkConfig {
        mode.network_config(&self.network)
    }

    /// Resolved configuration as TOML, stored in checkpoints.
    pub fn echo(&self) -> String {
        toml::to_string(self).unwrap_or_default()
    }
}
