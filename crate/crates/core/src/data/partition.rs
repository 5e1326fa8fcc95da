use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{index, SliceRandom};

use super::Dataset;
use crate::nn::Matrix;
use crate::rng::{self, Stream};
use crate::sim::AgentId;
use crate::{Error, Result};

/// Class ownership per agent plus the local agent's random mix-in.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionSpec {
    pub class_assignment: BTreeMap<AgentId, BTreeSet<usize>>,
    /// The agent that receives the mix-in.
    pub local: AgentId,
    /// Fraction of the local agent's class-filtered pool added as uniformly
    /// drawn extra samples.
    pub mixin_fraction: f64,
}

impl PartitionSpec {
    pub fn validate(&self, n_classes: usize) -> Result<()> {
        if !(0.0..1.0).contains(&self.mixin_fraction) {
            return Err(Error::Config(format!(
                "mixin fraction {} outside [0, 1)",
                self.mixin_fraction
            )));
        }
        if !self.class_assignment.contains_key(&self.local) {
            return Err(Error::Config(format!(
                "local agent {} has no class assignment",
                self.local
            )));
        }
        let mut seen = BTreeMap::new();
        for (&agent, classes) in &self.class_assignment {
            for &c in classes {
                if c >= n_classes {
                    return Err(Error::Config(format!(
                        "agent {agent}: class {c} outside [0, {n_classes})"
                    )));
                }
                if let Some(other) = seen.insert(c, agent) {
                    return Err(Error::Config(format!(
                        "class {c} assigned to both agent {other} and agent {agent}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Sample indices into a parent dataset owned by one agent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetPartition {
    pub owner: AgentId,
    pub indices: Vec<usize>,
}

impl DatasetPartition {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Per-class sample counts over the parent dataset's labels.
    pub fn class_counts(&self, parent: &Dataset) -> BTreeMap<usize, usize> {
        let mut counts = BTreeMap::new();
        for &i in &self.indices {
            *counts.entry(parent.labels[i]).or_insert(0) += 1;
        }
        counts
    }
}

/// Splits `train` by class ownership, then tops up the local agent with
/// `⌊mixin_fraction · pre-mixin size⌋` samples drawn without replacement
/// from the rest of the training set.
pub fn partition_noniid(
    train: &Dataset,
    spec: &PartitionSpec,
    seed: u64,
) -> Result<BTreeMap<AgentId, DatasetPartition>> {
    spec.validate(train.n_classes)?;
    let mut parts: BTreeMap<AgentId, DatasetPartition> = spec
        .class_assignment
        .iter()
        .map(|(&owner, classes)| {
            let indices = (0..train.len())
                .filter(|&i| classes.contains(&train.labels[i]))
                .collect();
            (owner, DatasetPartition { owner, indices })
        })
        .collect();

    let local = parts.get_mut(&spec.local).expect("validated");
    let n_mix = (spec.mixin_fraction * local.len() as f64).floor() as usize;
    if n_mix > 0 {
        let owned: BTreeSet<usize> = local.indices.iter().copied().collect();
        let candidates: Vec<usize> = (0..train.len()).filter(|i| !owned.contains(i)).collect();
        if n_mix > candidates.len() {
            return Err(Error::Config(format!(
                "mix-in needs {n_mix} samples but only {} are available",
                candidates.len()
            )));
        }
        let mut r = rng::stream(seed, u64::from(spec.local.0), Stream::Partition);
        let picked = index::sample(&mut r, candidates.len(), n_mix);
        local.indices.extend(picked.iter().map(|k| candidates[k]));
    }
    Ok(parts)
}

/// A materialized mini-batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub indices: Vec<usize>,
    pub x: Matrix,
    pub labels: Vec<usize>,
}

/// Shuffles the partition with a generator seeded by `epoch_seed` and cuts
/// it into batches of `batch_size`; the last batch may be short.
pub fn batches(
    partition: &DatasetPartition,
    parent: &Dataset,
    batch_size: usize,
    epoch_seed: u64,
) -> Result<Vec<Batch>> {
    if batch_size == 0 {
        return Err(Error::Config("batch size must be >= 1".into()));
    }
    if partition.is_empty() {
        return Err(Error::Input(format!("partition of agent {} is empty", partition.owner)));
    }
    let mut order = partition.indices.clone();
    order.shuffle(&mut rng::seeded(epoch_seed));
    Ok(order
        .chunks(batch_size)
        .map(|chunk| Batch {
            indices: chunk.to_vec(),
            x: parent.features.select_rows(chunk),
            labels: chunk.iter().map(|&i| parent.labels[i]).collect(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_blobs;

    fn three_agent_spec(mixin: f64) -> PartitionSpec {
        PartitionSpec {
            class_assignment: BTreeMap::from([
                (AgentId(0), BTreeSet::from([0, 1, 2, 3])),
                (AgentId(1), BTreeSet::from([4, 5, 6])),
                (AgentId(2), BTreeSet::from([7, 8, 9])),
            ]),
            local: AgentId(0),
            mixin_fraction: mixin,
        }
    }

    #[test]
    fn class_split_is_disjoint_and_pure() {
        let (train, _) = generate_blobs(10, 25, 2, 0.1, 0).unwrap();
        let parts = partition_noniid(&train, &three_agent_spec(0.0), 1).unwrap();
        assert_eq!(parts[&AgentId(0)].len(), 80);
        assert_eq!(parts[&AgentId(1)].len(), 60);
        assert_eq!(parts[&AgentId(2)].len(), 60);
        let spec = three_agent_spec(0.0);
        for (agent, part) in &parts {
            for &i in &part.indices {
                assert!(spec.class_assignment[agent].contains(&train.labels[i]));
            }
        }
        let all: BTreeSet<usize> = parts.values().flat_map(|p| p.indices.iter().copied()).collect();
        assert_eq!(all.len(), 200);
    }

    #[test]
    fn mixin_adds_five_percent_of_local_pool() {
        let (train, _) = generate_blobs(10, 1250, 2, 0.1, 0).unwrap();
        let parts = partition_noniid(&train, &three_agent_spec(0.05), 3).unwrap();
        let local = &parts[&AgentId(0)];
        let pre = (0..train.len()).filter(|&i| train.labels[i] < 4).count();
        assert_eq!(pre, 4000);
        assert_eq!(local.len(), 4200);
        let unique: BTreeSet<usize> = local.indices.iter().copied().collect();
        assert_eq!(unique.len(), 4200);
        let extra = local.indices[4000..].iter().filter(|&&i| train.labels[i] >= 4).count();
        assert_eq!(extra, 200);
        assert_eq!(parts[&AgentId(1)].len(), 3000);
    }

    #[test]
    fn overlapping_assignment_is_rejected() {
        let (train, _) = generate_blobs(10, 5, 2, 0.1, 0).unwrap();
        let mut spec = three_agent_spec(0.0);
        spec.class_assignment.get_mut(&AgentId(1)).unwrap().insert(3);
        assert!(matches!(partition_noniid(&train, &spec, 0), Err(Error::Config(_))));
    }

    #[test]
    fn single_batch_when_batch_exceeds_partition() {
        let (train, _) = generate_blobs(2, 10, 2, 0.1, 0).unwrap();
        let part = DatasetPartition {
            owner: AgentId(0),
            indices: (0..16).collect(),
        };
        let b = batches(&part, &train, 64, 5).unwrap();
        assert_eq!(b.len(), 1);
        let mut got = b[0].indices.clone();
        got.sort_unstable();
        assert_eq!(got, part.indices);
    }

    #[test]
    fn batches_cover_partition_and_repeat_per_seed() {
        let (train, _) = generate_blobs(3, 20, 2, 0.1, 0).unwrap();
        let part = DatasetPartition {
            owner: AgentId(1),
            indices: (5..42).collect(),
        };
        let b = batches(&part, &train, 8, 77).unwrap();
        assert_eq!(b.len(), 5);
        assert_eq!(b.last().unwrap().indices.len(), 5);
        let mut all: Vec<usize> = b.iter().flat_map(|x| x.indices.clone()).collect();
        all.sort_unstable();
        assert_eq!(all, part.indices);
        assert_eq!(b, batches(&part, &train, 8, 77).unwrap());
        assert_eq!(b[0].x.row(0), train.features.row(b[0].indices[0]));
    }

    #[test]
    fn empty_partition_is_an_input_error() {
        let (train, _) = generate_blobs(2, 5, 2, 0.1, 0).unwrap();
        let part = DatasetPartition {
            owner: AgentId(0),
            indices: vec![],
        };
        assert!(matches!(batches(&part, &train, 4, 0), Err(Error::Input(_))));
    }
}
