use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::AgentId;
use crate::{Error, Result};

/// Named knowledge-flow layouts over a local agent L and two remotes A, B.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    None,
    HalfMesh,
    FullMesh,
    Transitive,
    /// No directed edges; consumed by the federated baseline.
    FederatedStar,
}

impl Preset {
    pub const ALL: [Preset; 5] = [
        Preset::None,
        Preset::HalfMesh,
        Preset::FullMesh,
        Preset::Transitive,
        Preset::FederatedStar,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::None => "none",
            Preset::HalfMesh => "half_mesh",
            Preset::FullMesh => "full_mesh",
            Preset::Transitive => "transitive",
            Preset::FederatedStar => "federated_star",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown topology {s:?}")))
    }
}

/// Directed edges `source → target` over a fixed agent set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MeshTopology {
    agent_ids: BTreeSet<AgentId>,
    edges: BTreeSet<(AgentId, AgentId)>,
}

impl MeshTopology {
    pub fn new(
        agent_ids: impl IntoIterator<Item = AgentId>,
        edges: impl IntoIterator<Item = (AgentId, AgentId)>,
    ) -> Result<Self> {
        let agent_ids: BTreeSet<AgentId> = agent_ids.into_iter().collect();
        let edges: BTreeSet<(AgentId, AgentId)> = edges.into_iter().collect();
        for &(s, t) in &edges {
            if s == t {
                return Err(Error::Config(format!("self-edge on agent {s}")));
            }
            if !agent_ids.contains(&s) || !agent_ids.contains(&t) {
                return Err(Error::Config(format!("edge {s}->{t} names an unknown agent")));
            }
        }
        Ok(MeshTopology { agent_ids, edges })
    }

    pub fn agent_ids(&self) -> &BTreeSet<AgentId> {
        &self.agent_ids
    }

    pub fn edges(&self) -> &BTreeSet<(AgentId, AgentId)> {
        &self.edges
    }

    /// Sources feeding `target`, ascending.
    pub fn sources_of(&self, target: AgentId) -> Vec<AgentId> {
        self.edges.iter().filter(|e| e.1 == target).map(|e| e.0).collect()
    }

    pub fn has_edge(&self, source: AgentId, target: AgentId) -> bool {
        self.edges.contains(&(source, target))
    }

    /// Unordered neighbor pairs `(low, high)`, ascending.
    pub fn undirected_pairs(&self) -> Vec<(AgentId, AgentId)> {
        let pairs: BTreeSet<(AgentId, AgentId)> = self.edges.iter().map(|&(s, t)| (s.min(t), s.max(t))).collect();
        pairs.into_iter().collect()
    }
}

/// Builds a preset over `[L, A, B]`.
pub fn build_preset(preset: Preset, agent_ids: &[AgentId]) -> Result<MeshTopology> {
    let &[l, a, b] = agent_ids else {
        return Err(Error::Config(format!(
            "topology {preset} needs exactly 3 agents, got {}",
            agent_ids.len()
        )));
    };
    let edges = match preset {
        Preset::None | Preset::FederatedStar => vec![],
        Preset::HalfMesh => vec![(a, l), (b, l)],
        Preset::FullMesh => vec![(a, l), (b, l), (a, b), (b, a), (l, a), (l, b)],
        Preset::Transitive => vec![(a, b), (b, l)],
    };
    MeshTopology::new(agent_ids.iter().copied(), edges)
}

#[cfg(test)]
mod tests {
    use super::*;

    const L: AgentId = AgentId(0);
    const A: AgentId = AgentId(1);
    const B: AgentId = AgentId(2);

    fn edges(p: Preset) -> BTreeSet<(AgentId, AgentId)> {
        build_preset(p, &[L, A, B]).unwrap().edges().clone()
    }

    #[test]
    fn preset_edge_sets() {
        assert!(edges(Preset::None).is_empty());
        assert!(edges(Preset::FederatedStar).is_empty());
        assert_eq!(edges(Preset::HalfMesh), BTreeSet::from([(A, L), (B, L)]));
        assert_eq!(edges(Preset::Transitive), BTreeSet::from([(A, B), (B, L)]));
        assert_eq!(edges(Preset::FullMesh).len(), 6);
    }

    #[test]
    fn names_round_trip() {
        for p in Preset::ALL {
            assert_eq!(p.name().parse::<Preset>().unwrap(), p);
        }
        assert!(matches!("ring".parse::<Preset>(), Err(Error::Config(_))));
    }

    #[test]
    fn presets_need_three_agents() {
        assert!(build_preset(Preset::HalfMesh, &[L, A]).is_err());
    }

    #[test]
    fn self_edges_and_strangers_rejected() {
        assert!(MeshTopology::new([L, A], [(L, L)]).is_err());
        assert!(MeshTopology::new([L, A], [(L, B)]).is_err());
    }

    #[test]
    fn neighbor_queries() {
        let t = build_preset(Preset::FullMesh, &[L, A, B]).unwrap();
        assert_eq!(t.sources_of(L), vec![A, B]);
        assert_eq!(t.undirected_pairs(), vec![(L, A), (L, B), (A, B)]);
        let t = build_preset(Preset::Transitive, &[L, A, B]).unwrap();
        assert_eq!(t.sources_of(A), vec![]);
        assert_eq!(t.sources_of(B), vec![A]);
    }
}
