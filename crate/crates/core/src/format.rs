//! Scenario file format.
//!
//! A scenario is stored as one JSON document:
//!
//! ```text
//! {
//!   "format":   "mslayer-scenario/1",
//!   "nodes":    [ { storage_capacity, compute_capacity, position, coverage_radius, is_mcn }, ... ],
//!   "topology": { adjacency, link_bandwidth, backhaul_bandwidth },
//!   "catalog":  { layer_sizes, membership, compute_demand },
//!   "users":    [ { position, requested_service, data_size, transmit_power_dbm, channel_gains }, ... ],
//!   "physics":  { channel_bandwidth, noise_power, path_loss_exponent, path_loss_reference, min_distance }
//! }
//! ```
//!
//! Floats are written in shortest round-trip form and parsed back exactly.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{MicroserviceCatalog, NodeSpec, Physics, Scenario, Topology, UserSpec};

pub const SCENARIO_FORMAT: &str = "mslayer-scenario/1";

#[derive(Serialize)]
struct FileRef<'a> {
    format: &'a str,
    nodes: &'a [NodeSpec],
    topology: &'a Topology,
    catalog: &'a MicroserviceCatalog,
    users: &'a [UserSpec],
    physics: &'a Physics,
}

#[derive(Deserialize)]
struct FileOwned {
    format: String,
    nodes: Vec<NodeSpec>,
    topology: Topology,
    catalog: MicroserviceCatalog,
    users: Vec<UserSpec>,
    physics: Physics,
}

pub fn scenario_to_string(s: &Scenario) -> Result<String> {
    let file = FileRef {
        format: SCENARIO_FORMAT,
        nodes: &s.nodes,
        topology: &s.topology,
        catalog: &s.catalog,
        users: &s.users,
        physics: &s.physics,
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

pub fn scenario_from_str(text: &str) -> Result<Scenario> {
    let file: FileOwned = serde_json::from_str(text)?;
    if file.format != SCENARIO_FORMAT {
        return Err(Error::Format(format!(
            "unsupported format tag {:?}, expected {SCENARIO_FORMAT:?}",
            file.format
        )));
    }
    Ok(Scenario {
        nodes: file.nodes,
        topology: file.topology,
        catalog: file.catalog,
        users: file.users,
        physics: file.physics,
    })
}

pub fn write_scenario(path: &Path, s: &Scenario) -> Result<()> {
    std::fs::write(path, scenario_to_string(s)?)?;
    Ok(())
}

pub fn read_scenario(path: &Path) -> Result<Scenario> {
    scenario_from_str(&std::fs::read_to_string(path)?)
}
