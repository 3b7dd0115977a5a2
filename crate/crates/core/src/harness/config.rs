//! Optional TOML configuration file. Every section and field is optional; command
//! line flags override whatever the file sets.
//!
//! ```toml
//! [data]
//! brains = 17
//! slices = 57
//! noise = 0.1
//!
//! [model]
//! model_kind = "seranet"
//! reg_type = "A"
//! n_blocks = 2
//!
//! [train]
//! loss_variant = "ce_final"
//! max_epochs = 50
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::network::ModelConfig;
use crate::training::TrainConfig;

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub brains: Option<usize>,
    pub test_brains: Option<usize>,
    pub slices: Option<usize>,
    pub height: Option<usize>,
    pub width: Option<usize>,
    pub rate: Option<f64>,
    pub center_lines: Option<usize>,
    pub noise: Option<f64>,
    pub seed: Option<u64>,
    pub tissue_table: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub data: DataSection,
    pub model: Option<ModelConfig>,
    pub train: Option<TrainConfig>,
}

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn load_optional(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }
}
