//! Run configuration and the single-seed experiment driver.
//!
//! [`RunConfig`] is plain serde data; the command-line front end parses it
//! from TOML and echoes it back as JSON.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::baselines::{FedConfig, GossipConfig, KdConfig};
use crate::data::{generate_blobs, load_idx, partition_noniid, Dataset, PartitionSpec, Split};
use crate::metrics::{ConfusionMatrix, MetricsRecord};
use crate::nn::LogitDistance;
use crate::rng::{self, Stream};
use crate::sim::{
    build_preset, run_simulation, Agent, AgentId, MeshTopology, Method, Preset, Schedule, ScheduleMode, SimConfig,
};
use crate::transfer::{LossWeights, PipelineObjective};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Synthetic,
    Fmnist,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    Ours,
    Kd,
    Fedavg,
    Gossip,
    None,
}

impl MethodKind {
    /// Tag written to the metrics `method` column.
    pub fn name(self) -> &'static str {
        match self {
            MethodKind::Ours => "ours",
            MethodKind::Kd => "kd",
            MethodKind::Fedavg => "fedavg",
            MethodKind::Gossip => "gossip-avg",
            MethodKind::None => "none",
        }
    }
}

impl std::fmt::Display for MethodKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for MethodKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ours" => Ok(MethodKind::Ours),
            "kd" => Ok(MethodKind::Kd),
            "fedavg" => Ok(MethodKind::Fedavg),
            "gossip" | "gossip-avg" => Ok(MethodKind::Gossip),
            "none" => Ok(MethodKind::None),
            _ => Err(Error::Config(format!("unknown method {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub kind: DatasetKind,
    pub n_classes: usize,
    /// Synthetic: samples per class before the 80/20 split.
    pub samples_per_class: usize,
    pub dims: usize,
    pub spread: f64,
    /// Directory holding the four standard FMNIST IDX files.
    pub fmnist_dir: Option<PathBuf>,
    /// FMNIST subsampling; `None` keeps every sample.
    pub train_per_class: Option<usize>,
    pub test_per_class: Option<usize>,
    /// Class sets indexed by agent id; agent 0 is the local agent.
    pub assignment: Vec<BTreeSet<usize>>,
    pub mixin_fraction: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            kind: DatasetKind::Synthetic,
            n_classes: 10,
            samples_per_class: 1250,
            dims: 16,
            spread: 0.25,
            fmnist_dir: None,
            train_per_class: Some(500),
            test_per_class: Some(100),
            assignment: vec![(0..4).collect(), (4..7).collect(), (7..10).collect()],
            mixin_fraction: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Hidden widths; the last one is the hosted layer's size and must
    /// equal the one before it.
    pub hidden: Vec<usize>,
    /// Start every agent from one common initialization instead of a
    /// per-agent draw.
    pub shared_init: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden: vec![32, 32],
            shared_init: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub method: MethodKind,
    pub topology: Preset,
    pub schedule: ScheduleMode,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_local: f64,
    pub momentum: f64,
    pub lr_transfer: f64,
    pub transfer_momentum: f64,
    /// Weight of the classification term; the divergence term gets
    /// `1 − alpha`.
    pub alpha: f64,
    pub objective: PipelineObjective,
    pub freeze_sources: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            method: MethodKind::Ours,
            topology: Preset::HalfMesh,
            schedule: ScheduleMode::EpochInterleaved,
            epochs: 25,
            batch_size: 32,
            lr_local: 0.05,
            momentum: 0.0,
            lr_transfer: 0.003,
            transfer_momentum: 0.0,
            alpha: 0.995,
            objective: PipelineObjective::Combined,
            freeze_sources: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub kd_lambda: f64,
    pub kd_distance: LogitDistance,
    pub mixing_weight: f64,
    pub fed_local_epochs: usize,
    pub fed_sample_weighted: bool,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            kd_lambda: 1.0,
            kd_distance: LogitDistance::Mse,
            mixing_weight: 1.0,
            fed_local_epochs: 1,
            fed_sample_weighted: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub record_timing: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            seeds: (0..5).collect(),
            out_dir: PathBuf::from("runs/default"),
            record_timing: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    pub model: ModelConfig,
    pub training: TrainingConfig,
    pub baselines: BaselineConfig,
    pub run: OutputConfig,
}

const FMNIST_CLASSES: [&str; 10] = [
    "t-shirt",
    "trouser",
    "pullover",
    "dress",
    "coat",
    "sandal",
    "shirt",
    "sneaker",
    "bag",
    "ankle-boot",
];

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let t = &self.training;
        if !(0.0..=1.0).contains(&t.alpha) {
            return Err(Error::Config(format!("alpha {} outside [0, 1]", t.alpha)));
        }
        if t.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if t.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.run.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        if self.dataset.assignment.is_empty() {
            return Err(Error::Config("assignment must name at least one agent".into()));
        }
        if self.model.hidden.len() < 2 {
            return Err(Error::Config("model needs at least two hidden layers".into()));
        }
        if self.dataset.kind == DatasetKind::Fmnist && self.dataset.fmnist_dir.is_none() {
            return Err(Error::Config("fmnist dataset needs fmnist_dir".into()));
        }
        if self.dataset.kind == DatasetKind::Synthetic
            && (self.dataset.n_classes == 0 || self.dataset.samples_per_class == 0 || self.dataset.dims == 0)
        {
            return Err(Error::Config("synthetic dataset sizes must be positive".into()));
        }
        LossWeights::from_alpha(t.alpha)?;
        self.method(0)?;
        Ok(())
    }

    pub fn loss_weights(&self) -> Result<LossWeights> {
        LossWeights::from_alpha(self.training.alpha)
    }

    pub fn method(&self, seed: u64) -> Result<Method> {
        let b = &self.baselines;
        let epochs = self.training.epochs;
        Ok(match self.training.method {
            MethodKind::Ours => Method::Ours,
            MethodKind::None => Method::None,
            MethodKind::Kd => Method::Kd(KdConfig::new(b.kd_lambda, b.kd_distance)?),
            MethodKind::Fedavg => {
                let mut fed = FedConfig::new(epochs, b.fed_local_epochs)?;
                fed.sample_weighted = b.fed_sample_weighted;
                Method::FedAvg(fed)
            }
            MethodKind::Gossip => Method::Gossip(GossipConfig::new(
                epochs,
                b.mixing_weight,
                rng::derive_seed(seed, 0, Stream::Gossip),
            )?),
        })
    }

    pub fn sim_config(&self, seed: u64) -> Result<SimConfig> {
        let t = &self.training;
        let mut cfg = SimConfig::new(self.method(seed)?, Schedule::new(t.schedule, t.epochs)?);
        cfg.loss_weights = self.loss_weights()?;
        cfg.objective = t.objective;
        cfg.batch_size = t.batch_size;
        cfg.lr_transfer = t.lr_transfer;
        cfg.transfer_momentum = t.transfer_momentum;
        cfg.freeze_sources = t.freeze_sources;
        cfg.record_timing = self.run.record_timing;
        Ok(cfg)
    }

    pub fn agent_ids(&self) -> Vec<AgentId> {
        (0..self.dataset.assignment.len() as u32).map(AgentId).collect()
    }

    pub fn topology(&self) -> Result<MeshTopology> {
        let ids = self.agent_ids();
        match self.training.topology {
            Preset::None | Preset::FederatedStar => MeshTopology::new(ids, []),
            preset => build_preset(preset, &ids),
        }
    }

    pub fn class_names(&self, n_classes: usize) -> Vec<String> {
        match self.dataset.kind {
            DatasetKind::Fmnist if n_classes == FMNIST_CLASSES.len() => {
                FMNIST_CLASSES.iter().map(|s| s.to_string()).collect()
            }
            _ => (0..n_classes).map(|c| format!("c{c}")).collect(),
        }
    }

    /// Train and test sets for `seed`.
    pub fn datasets(&self, seed: u64) -> Result<(Dataset, Dataset)> {
        let d = &self.dataset;
        match d.kind {
            DatasetKind::Synthetic => generate_blobs(d.n_classes, d.samples_per_class, d.dims, d.spread, seed),
            DatasetKind::Fmnist => {
                let dir = d
                    .fmnist_dir
                    .as_ref()
                    .ok_or_else(|| Error::Config("fmnist dataset needs fmnist_dir".into()))?;
                let mut train = load_idx(
                    dir.join("train-images-idx3-ubyte"),
                    dir.join("train-labels-idx1-ubyte"),
                    Split::Train,
                )?;
                let mut test = load_idx(
                    dir.join("t10k-images-idx3-ubyte"),
                    dir.join("t10k-labels-idx1-ubyte"),
                    Split::Test,
                )?;
                if let Some(k) = d.train_per_class {
                    train = train.take_per_class(k);
                }
                if let Some(k) = d.test_per_class {
                    test = test.take_per_class(k);
                }
                Ok((train, test))
            }
        }
    }

    /// Agents with their partitions and freshly initialized models.
    pub fn build_agents(&self, train: &Dataset, seed: u64) -> Result<Vec<Agent>> {
        let ids = self.agent_ids();
        let spec = PartitionSpec {
            class_assignment: ids
                .iter()
                .copied()
                .zip(self.dataset.assignment.iter().cloned())
                .collect(),
            local: ids[0],
            mixin_fraction: self.dataset.mixin_fraction,
        };
        let mut parts = partition_noniid(train, &spec, seed)?;
        let mut sizes = vec![train.dims()];
        sizes.extend(&self.model.hidden);
        sizes.push(train.n_classes);
        ids.iter()
            .zip(&self.dataset.assignment)
            .map(|(&id, classes)| {
                let agent_seed = rng::derive_seed(seed, u64::from(id.0), Stream::Agent);
                let init_seed = if self.model.shared_init {
                    rng::derive_seed(seed, 0, Stream::Init)
                } else {
                    agent_seed
                };
                let model = Agent::init_model(&sizes, init_seed)?;
                let partition = parts
                    .remove(&id)
                    .ok_or_else(|| Error::Internal(format!("no partition for agent {id}")))?;
                Agent::new(
                    id,
                    model,
                    self.training.lr_local,
                    self.training.momentum,
                    partition,
                    classes.clone(),
                    agent_seed,
                )
            })
            .collect()
    }
}

/// Everything one seed produces.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub seed: u64,
    pub records: Vec<MetricsRecord>,
    pub confusions: BTreeMap<AgentId, ConfusionMatrix>,
    pub class_names: Vec<String>,
    pub messages: u64,
}

impl RunOutput {
    /// Final-epoch record of `agent`.
    pub fn final_record(&self, agent: AgentId) -> Option<&MetricsRecord> {
        self.records.iter().rev().find(|r| r.agent == agent)
    }
}

pub fn run_seed(cfg: &RunConfig, seed: u64) -> Result<RunOutput> {
    cfg.validate()?;
    let (train, test) = cfg.datasets(seed)?;
    let mut agents = cfg.build_agents(&train, seed)?;
    let topology = cfg.topology()?;
    let out = run_simulation(&mut agents, &topology, &cfg.sim_config(seed)?, &train, &test)?;
    Ok(RunOutput {
        seed,
        records: out.records,
        confusions: out
            .final_evaluations
            .into_iter()
            .map(|(id, e)| (id, e.confusion))
            .collect(),
        class_names: cfg.class_names(test.n_classes),
        messages: out.messages.total(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.dataset.samples_per_class = 50;
        cfg.model.hidden = vec![8, 8];
        cfg.training.epochs = 2;
        cfg
    }

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn invalid_values_are_config_errors() {
        let mut cfg = RunConfig::default();
        cfg.training.alpha = 1.5;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let mut cfg = RunConfig::default();
        cfg.run.seeds.clear();
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.training.epochs = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn tiny_run_produces_a_record_per_agent_and_epoch() {
        let out = run_seed(&tiny(), 3).unwrap();
        assert_eq!(out.records.len(), 2 * 3);
        assert_eq!(out.messages, 2 * 2);
        assert_eq!(out.confusions.len(), 3);
        assert_eq!(out.confusions[&AgentId(0)].total(), 10 * 10);
    }

    #[test]
    fn method_names_parse() {
        assert_eq!("gossip-avg".parse::<MethodKind>().unwrap(), MethodKind::Gossip);
        assert!("admm".parse::<MethodKind>().is_err());
    }
}
