use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::config::NetConfig;
use super::layers::RunningStats;
use super::network::Network;
use crate::error::{Error, Result};

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

/// Everything needed to resume training or run inference, as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub schema_version: u32,
    pub config: NetConfig,
    pub config_hash: String,
    pub params: Vec<f64>,
    pub running: Vec<RunningStats>,
    pub adam: Option<Adam>,
    pub seed: u64,
    pub epoch: usize,
    /// Class names indexed by label.
    pub class_names: Vec<String>,
    /// Pyramid scheme of the training data, if any.
    pub scheme: Option<crate::polyshape::Scheme>,
}

impl Checkpoint {
    pub fn from_network(net: &Network, adam: Option<&Adam>, seed: u64) -> Self {
        Self {
            schema_version: CHECKPOINT_SCHEMA_VERSION,
            config: net.config().clone(),
            config_hash: net.config().hash(),
            params: net.params().to_vec(),
            running: net.running_stats().to_vec(),
            adam: adam.cloned(),
            seed,
            epoch: 0,
            class_names: Vec::new(),
            scheme: None,
        }
    }

    pub fn network(&self) -> Result<Network> {
        if self.config.hash() != self.config_hash {
            return Err(Error::Config("checkpoint config hash does not match its config".into()));
        }
        Network::from_parts(self.config.clone(), self.params.clone(), self.running.clone())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::polyshape::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ckpt: Self = crate::polyshape::read_json(path)?;
        if ckpt.schema_version != CHECKPOINT_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported checkpoint schema version {}",
                ckpt.schema_version
            )));
        }
        Ok(ckpt)
    }
}
