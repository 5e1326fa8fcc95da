//! Agents, topologies and the simulation loop.

mod advert;
mod agent;
mod messages;
mod runner;
mod topology;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use advert::{score_source, SourceAdvertisement, SourceScore};
pub use agent::{Agent, SourceSnapshot};
pub use messages::{Endpoint, MessageLog};
pub(crate) use runner::Recorder;
pub use runner::{run_simulation, transfer_epoch, EpochSummary, Method, Schedule, ScheduleMode, SimConfig, SimOutput};
pub use topology::{build_preset, MeshTopology, Preset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub u32);

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}
