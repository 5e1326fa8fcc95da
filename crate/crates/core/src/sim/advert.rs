use std::collections::{BTreeMap, BTreeSet};

use super::AgentId;

/// What an agent publishes about itself for source selection. Carries
/// counts and a layer signature, never samples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceAdvertisement {
    pub agent_id: AgentId,
    /// Samples per observed class; zero-count classes are dropped.
    class_counts: BTreeMap<usize, usize>,
    /// Shape of the hosted (penultimate) layer.
    pub layer_shape: (usize, usize),
}

impl SourceAdvertisement {
    pub fn new(agent_id: AgentId, class_counts: BTreeMap<usize, usize>, layer_shape: (usize, usize)) -> Self {
        let class_counts = class_counts.into_iter().filter(|&(_, n)| n > 0).collect();
        SourceAdvertisement {
            agent_id,
            class_counts,
            layer_shape,
        }
    }

    pub fn class_counts(&self) -> &BTreeMap<usize, usize> {
        &self.class_counts
    }

    pub fn class_set(&self) -> BTreeSet<usize> {
        self.class_counts.keys().copied().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceScore {
    pub candidate: AgentId,
    /// Classes both agents have seen.
    pub intersection: usize,
    /// Classes the candidate has seen and the target has not.
    pub difference: usize,
    pub layer_compatible: bool,
    pub candidate_counts: BTreeMap<usize, usize>,
}

/// Advisory ranking data for `candidate` as a source for `target`.
pub fn score_source(target: &SourceAdvertisement, candidate: &SourceAdvertisement) -> SourceScore {
    let t = target.class_set();
    let c = candidate.class_set();
    SourceScore {
        candidate: candidate.agent_id,
        intersection: c.intersection(&t).count(),
        difference: c.difference(&t).count(),
        layer_compatible: target.layer_shape == candidate.layer_shape,
        candidate_counts: candidate.class_counts.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ad(id: u32, classes: impl IntoIterator<Item = usize>, shape: (usize, usize)) -> SourceAdvertisement {
        SourceAdvertisement::new(AgentId(id), classes.into_iter().map(|c| (c, 100)).collect(), shape)
    }

    #[test]
    fn disjoint_candidate() {
        let s = score_source(&ad(0, 0..4, (32, 32)), &ad(1, 4..7, (32, 32)));
        assert_eq!((s.intersection, s.difference, s.layer_compatible), (0, 3, true));
    }

    #[test]
    fn identical_advertisements() {
        let a = ad(0, 0..4, (32, 32));
        let s = score_source(&a, &a);
        assert_eq!((s.intersection, s.difference), (4, 0));
    }

    #[test]
    fn shape_mismatch_is_incompatible() {
        assert!(!score_source(&ad(0, 0..4, (32, 32)), &ad(1, 4..7, (16, 16))).layer_compatible);
    }

    #[test]
    fn class_set_tracks_counts() {
        let a = SourceAdvertisement::new(AgentId(3), BTreeMap::from([(1, 5), (2, 0)]), (4, 4));
        assert_eq!(a.class_set(), BTreeSet::from([1]));
    }
}
