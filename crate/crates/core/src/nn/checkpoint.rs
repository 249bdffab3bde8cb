use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::Network;
use super::optim::Adam;
use super::spec::NetworkSpec;
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Network spec, flat parameters, batch-norm buffers and optimizer state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub spec: NetworkSpec,
    pub params: Vec<f64>,
    pub buffers: Vec<f64>,
    pub optimizer: Option<Adam>,
}

impl Checkpoint {
    pub fn capture(network: &Network, optimizer: Option<&Adam>) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            spec: network.spec().clone(),
            params: network.params().to_vec(),
            buffers: network.buffers().to_vec(),
            optimizer: optimizer.cloned(),
        }
    }

    pub fn restore(&self) -> Result<Network> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "checkpoint version {} unsupported (expected {CHECKPOINT_VERSION})",
                self.version
            )));
        }
        Network::from_parts(&self.spec, self.params.clone(), self.buffers.clone())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}
