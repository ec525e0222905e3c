use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Configuration, LoadPoint, Network, NetworkParts, Node, Section, SourceBus, Switch};
use crate::error::{HcError, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// On-disk feeder file. `schema_version` is required.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeederDocument {
    pub schema_version: u32,
    #[serde(default)]
    pub feeder_ids: Vec<String>,
    pub nodes: Vec<Node>,
    pub sections: Vec<Section>,
    #[serde(default)]
    pub switches: Vec<Switch>,
    pub sources: Vec<SourceBus>,
    #[serde(default)]
    pub loads: Vec<LoadPoint>,
    #[serde(default)]
    pub configurations: Vec<Configuration>,
}

impl FeederDocument {
    pub fn into_network(self) -> Result<Network> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(HcError::InvalidNetwork(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let mut feeder_ids = self.feeder_ids;
        if feeder_ids.is_empty() {
            feeder_ids = self.sources.iter().map(|s| s.feeder_id.clone()).collect();
        }
        Network::new(NetworkParts {
            feeder_ids,
            nodes: self.nodes,
            sections: self.sections,
            switches: self.switches,
            sources: self.sources,
            loads: self.loads,
            configurations: self.configurations,
        })
    }

    pub fn from_network(network: &Network) -> Self {
        let p = network.parts().clone();
        FeederDocument {
            schema_version: SCHEMA_VERSION,
            feeder_ids: p.feeder_ids,
            nodes: p.nodes,
            sections: p.sections,
            switches: p.switches,
            sources: p.sources,
            loads: p.loads,
            configurations: p.configurations,
        }
    }
}

impl Network {
    pub fn from_json(text: &str) -> Result<Network> {
        serde_json::from_str::<FeederDocument>(text)?.into_network()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&FeederDocument::from_network(self))?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Network> {
        Network::from_json(&std::fs::read_to_string(path)?)
    }
}
