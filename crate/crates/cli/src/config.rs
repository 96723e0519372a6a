//! Optional TOML configuration.
//!
//! ```toml
//! tile = 16
//! strict = false
//! psum_capacity = 4096
//!
//! [energy]
//! ext_cost_per_elem = 64.0
//! int_cost_per_mac = 1.0
//! bytes_per_elem = 1.0
//!
//! [[model]]
//! name = "my-encoder"
//! hidden_dim = 1024
//! ffn_dim = 4096
//! num_layers = 24
//! default_seq_len = 512
//! ```
//!
//! Every key is optional. A `[[model]]` entry with a built-in name replaces
//! that preset. Command-line flags take precedence over the file.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use tas_ema::workload::{ModelProvenance, ModelRegistry};
use tas_ema::ModelConfig;

use crate::Failure;

pub const CONFIG_ENV: &str = "TAS_EMA_CONFIG";

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub tile: Option<u64>,
    pub strict: Option<bool>,
    pub psum_capacity: Option<u64>,
    #[serde(default)]
    pub energy: EnergySection,
    #[serde(default)]
    pub model: Vec<ModelEntry>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergySection {
    pub ext_cost_per_elem: Option<f64>,
    pub int_cost_per_mac: Option<f64>,
    pub bytes_per_elem: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelEntry {
    pub name: String,
    pub hidden_dim: u64,
    pub ffn_dim: u64,
    pub num_layers: u64,
    pub default_seq_len: u64,
}

impl FileConfig {
    /// Reads `explicit`, or the file named by `$TAS_EMA_CONFIG`, or nothing.
    pub fn load(explicit: Option<&Path>) -> Result<Self, Failure> {
        let path = match explicit {
            Some(p) => Some(p.to_path_buf()),
            None => std::env::var_os(CONFIG_ENV)
                .filter(|v| !v.is_empty())
                .map(PathBuf::from),
        };
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(&path)
            .map_err(|e| Failure::user(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
            .map_err(|e| Failure::user(format!("invalid config {}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.message().to_string())
    }

    pub fn registry(&self) -> Result<ModelRegistry, Failure> {
        let mut registry = ModelRegistry::with_presets();
        for m in &self.model {
            registry.insert(ModelConfig {
                name: m.name.clone(),
                hidden_dim: m.hidden_dim,
                ffn_dim: m.ffn_dim,
                num_layers: m.num_layers,
                default_seq_len: m.default_seq_len,
                provenance: ModelProvenance::CONFIG,
            })?;
        }
        Ok(registry)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_all_defaults() {
        let c = FileConfig::parse("").unwrap();
        assert!(c.tile.is_none() && c.model.is_empty());
    }

    #[test]
    fn model_entries_override_presets() {
        let c = FileConfig::parse(
            "[[model]]\nname = \"bert-base\"\nhidden_dim = 1024\nffn_dim = 4096\nnum_layers = 24\ndefault_seq_len = 128\n",
        )
        .unwrap();
        let r = c.registry().unwrap();
        assert_eq!(r.get("bert-base").unwrap().hidden_dim, 1024);
        assert!(r.get("gpt3").is_ok());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(FileConfig::parse("tiles = 3").is_err());
    }
}
