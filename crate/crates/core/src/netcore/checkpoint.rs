//! Parameter checkpoints: a versioned JSON document holding the network
//! configuration, the training mode tag and every parameter array by name.
//! Floats are written in shortest round-trip form, so save/load is exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::NetworkConfig;
use super::params::ParamSet;
use crate::error::{HgnError, Result};
use crate::scalar::Real;

pub const CHECKPOINT_FORMAT: &str = "hgn-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint<T> {
    pub format: String,
    pub version: u32,
    pub dtype: String,
    pub mode: String,
    pub network: NetworkConfig,
    /// Free-form configuration echo (training and loss settings).
    #[serde(default)]
    pub config_echo: String,
    pub params: ParamSet<T>,
}

impl<T: Real> Checkpoint<T> {
    pub fn new(mode: impl Into<String>, network: NetworkConfig, config_echo: String, params: ParamSet<T>) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            dtype: T::DTYPE.into(),
            mode: mode.into(),
            network,
            config_echo,
            params,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| HgnError::Checkpoint(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let (probe, dtype) = probe(text)?;
        if dtype != T::DTYPE {
            return Err(HgnError::Checkpoint(format!("checkpoint holds {dtype}, expected {}", T::DTYPE)));
        }
        serde_json::from_value(probe).map_err(|e| HgnError::Checkpoint(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

/// Checks the format marker and version, returning the parsed document and
/// its scalar type tag.
fn probe(text: &str) -> Result<(serde_json::Value, String)> {
    let probe: serde_json::Value =
        serde_json::from_str(text).map_err(|e| HgnError::Checkpoint(format!("not a checkpoint: {e}")))?;
    if probe.get("format").and_then(|v| v.as_str()) != Some(CHECKPOINT_FORMAT) {
        return Err(HgnError::Checkpoint("missing checkpoint format marker".into()));
    }
    let version = probe.get("version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if version != CHECKPOINT_VERSION {
        return Err(HgnError::VersionMismatch { found: version, expected: CHECKPOINT_VERSION });
    }
    let dtype = probe.get("dtype").and_then(|v| v.as_str()).unwrap_or("").to_string();
    Ok((probe, dtype))
}

/// Scalar type tag (`"f32"` or `"f64"`) of a serialized checkpoint.
pub fn checkpoint_dtype(text: &str) -> Result<String> {
    probe(text).map(|(_, d)| d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netcore::network::Network;

    fn sample() -> Checkpoint<f32> {
        let cfg = NetworkConfig { input_height: 8, input_width: 12, widths: vec![2, 3], ..Default::default() };
        let net = Network::<f32>::new(cfg.clone()).unwrap();
        Checkpoint::new("HGN", cfg, "epochs = 1".into(), net.init_params(9))
    }

    #[test]
    fn json_round_trip_is_exact() {
        let c = sample();
        let text = c.to_json().unwrap();
        let back = Checkpoint::<f32>::from_json(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_json().unwrap(), text);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let c = sample();
        c.save(&path).unwrap();
        assert_eq!(Checkpoint::<f32>::load(&path).unwrap(), c);
    }

    #[test]
    fn wrong_version_and_dtype_are_rejected() {
        let text = sample().to_json().unwrap();
        let bumped = text.replacen("\"version\":1", "\"version\":7", 1);
        assert!(matches!(
            Checkpoint::<f32>::from_json(&bumped),
            Err(HgnError::VersionMismatch { found: 7, expected: 1 })
        ));
        assert!(matches!(Checkpoint::<f64>::from_json(&text), Err(HgnError::Checkpoint(_))));
        assert!(matches!(Checkpoint::<f32>::from_json("{}"), Err(HgnError::Checkpoint(_))));
    }
}
