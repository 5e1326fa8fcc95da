use std::collections::BTreeMap;
use std::fmt;

use super::AgentId;

/// A message endpoint: an agent or the federated aggregator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Endpoint {
    Agent(AgentId),
    Aggregator,
}

impl From<AgentId> for Endpoint {
    fn from(id: AgentId) -> Self {
        Endpoint::Agent(id)
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Agent(id) => write!(f, "{id}"),
            Endpoint::Aggregator => f.write_str("aggregator"),
        }
    }
}

/// Message counts per (source, target, epoch) with a running total.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MessageLog {
    counts: BTreeMap<(Endpoint, Endpoint, usize), u64>,
    total: u64,
}

impl MessageLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, source: impl Into<Endpoint>, target: impl Into<Endpoint>, epoch: usize) {
        *self.counts.entry((source.into(), target.into(), epoch)).or_insert(0) += 1;
        self.total += 1;
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn count(&self, source: impl Into<Endpoint>, target: impl Into<Endpoint>, epoch: usize) -> u64 {
        self.counts
            .get(&(source.into(), target.into(), epoch))
            .copied()
            .unwrap_or(0)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&(Endpoint, Endpoint, usize), &u64)> {
        self.counts.iter()
    }
}
