use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{Agent, AgentId, MeshTopology, MessageLog, SourceSnapshot};
use crate::baselines::{self, FedConfig, GossipConfig, KdConfig};
use crate::data::{Batch, Dataset};
use crate::metrics::{evaluate, Evaluation, MetricsRecord};
use crate::nn::Matrix;
use crate::transfer::{pipeline_step, LossWeights, PipelineObjective, StepLosses, TransferBatch};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleMode {
    /// A local epoch for every agent, then a transfer epoch for every target.
    #[default]
    EpochInterleaved,
    /// A local step followed by the pipeline steps, batch by batch.
    BatchInterleaved,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Schedule {
    pub mode: ScheduleMode,
    pub total_epochs: usize,
}

impl Schedule {
    pub fn new(mode: ScheduleMode, total_epochs: usize) -> Result<Self> {
        if total_epochs == 0 {
            return Err(Error::Config("schedule needs at least one epoch".into()));
        }
        Ok(Schedule { mode, total_epochs })
    }
}

/// Training method and its settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    /// Horizontal transfer through pipelines along the topology's edges.
    Ours,
    /// Local training only; topology edges are ignored.
    None,
    Kd(KdConfig),
    FedAvg(FedConfig),
    Gossip(GossipConfig),
}

impl Method {
    /// Label written to the method column.
    pub fn tag(&self) -> &'static str {
        match self {
            Method::Ours => "ours",
            Method::None => "none",
            Method::Kd(_) => "kd",
            Method::FedAvg(_) => "fedavg",
            Method::Gossip(_) => "gossip-avg",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub method: Method,
    pub schedule: Schedule,
    pub loss_weights: LossWeights,
    pub objective: PipelineObjective,
    pub batch_size: usize,
    pub lr_transfer: f64,
    pub transfer_momentum: f64,
    /// Agents without in-edges skip local training.
    pub freeze_sources: bool,
    /// Fill the `seconds` column with elapsed wall-clock time; otherwise it
    /// stays zero so artifacts are byte-reproducible.
    pub record_timing: bool,
}

impl SimConfig {
    pub fn new(method: Method, schedule: Schedule) -> Self {
        SimConfig {
            method,
            schedule,
            loss_weights: LossWeights::new(0.995, 0.005).expect("valid weights"),
            objective: PipelineObjective::default(),
            batch_size: 32,
            lr_transfer: 0.003,
            transfer_momentum: 0.0,
            freeze_sources: false,
            record_timing: false,
        }
    }
}

/// Mean losses over the pipeline steps of one transfer epoch.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EpochSummary {
    pub loss1: f64,
    pub loss2: f64,
    pub combined: f64,
    pub l1_diagnostic: f64,
    pub steps: usize,
}

impl EpochSummary {
    fn add(&mut self, s: &StepLosses) {
        self.loss1 += s.loss1;
        self.loss2 += s.loss2;
        self.combined += s.combined;
        self.l1_diagnostic += s.l1_diagnostic;
        self.steps += 1;
    }

    fn merge(&mut self, other: &EpochSummary) {
        self.loss1 += other.loss1;
        self.loss2 += other.loss2;
        self.combined += other.combined;
        self.l1_diagnostic += other.l1_diagnostic;
        self.steps += other.steps;
    }

    fn finish(mut self) -> Self {
        if self.steps > 0 {
            let n = self.steps as f64;
            self.loss1 /= n;
            self.loss2 /= n;
            self.combined /= n;
            self.l1_diagnostic /= n;
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub records: Vec<MetricsRecord>,
    pub final_evaluations: BTreeMap<AgentId, Evaluation>,
    pub messages: MessageLog,
    /// Per-epoch transfer losses of every target, in run order.
    pub transfer: Vec<(usize, AgentId, EpochSummary)>,
}

/// Runs the pipelines of `target` once on `batch`, in ascending source
/// order. The first pipeline reads `base` as its input layer, each later one
/// the layer its predecessor installed.
fn transfer_on_batch(
    target: &mut Agent,
    sources: &[SourceSnapshot],
    base: &Matrix,
    batch: &Batch,
    cfg: &SimConfig,
) -> Result<EpochSummary> {
    let teachers = sources
        .iter()
        .map(|s| s.distribution(&batch.x))
        .collect::<Result<Vec<_>>>()?;
    let Agent {
        model, pipelines, id, ..
    } = target;
    let mut current = base.clone();
    let mut summary = EpochSummary::default();
    for source in sources {
        let pipeline = pipelines
            .get_mut(&source.agent_id)
            .ok_or_else(|| Error::Config(format!("agent {id} has no pipeline from agent {}", source.agent_id)))?;
        let losses = pipeline_step(
            model,
            pipeline,
            source.hosted_weights()?,
            &current,
            TransferBatch {
                x: &batch.x,
                labels: &batch.labels,
                teachers: &teachers,
            },
            cfg.loss_weights,
            cfg.objective,
        )?;
        summary.add(&losses);
        current = model.layers[pipeline.target_layer].weights.clone();
    }
    Ok(summary)
}

fn sorted_sources(sources: &[SourceSnapshot]) -> Vec<SourceSnapshot> {
    let mut s = sources.to_vec();
    s.sort_by_key(|s| s.agent_id);
    s
}

/// One transfer epoch for `target` over its own batches of `epoch`.
///
/// The pipeline input layer is the target's hosted layer at the start of
/// the epoch. Only pipeline parameters and the hosted layer's weights
/// change; the local optimizer is not stepped. Logs one message per source.
pub fn transfer_epoch(
    target: &mut Agent,
    sources: &[SourceSnapshot],
    data: &Dataset,
    cfg: &SimConfig,
    epoch: usize,
    log: &mut MessageLog,
) -> Result<EpochSummary> {
    if sources.is_empty() {
        return Ok(EpochSummary::default());
    }
    let sources = sorted_sources(sources);
    for s in &sources {
        if !target.pipelines.contains_key(&s.agent_id) {
            return Err(Error::Config(format!(
                "agent {} has no pipeline from agent {}",
                target.id, s.agent_id
            )));
        }
        log.record(s.agent_id, target.id, epoch);
    }
    let base = target.model.hosted_layer()?.weights.clone();
    let mut summary = EpochSummary::default();
    for batch in target.epoch_batches(data, cfg.batch_size, epoch)? {
        summary.merge(&transfer_on_batch(target, &sources, &base, &batch, cfg)?);
    }
    Ok(summary.finish())
}

/// Builds metrics rows and tracks elapsed time.
pub(crate) struct Recorder {
    start: Instant,
    timing: bool,
    method: &'static str,
    records: Vec<MetricsRecord>,
    last: BTreeMap<AgentId, Evaluation>,
}

impl Recorder {
    pub fn new(cfg: &SimConfig) -> Self {
        Recorder {
            start: Instant::now(),
            timing: cfg.record_timing,
            method: cfg.method.tag(),
            records: Vec::new(),
            last: BTreeMap::new(),
        }
    }

    pub fn push(
        &mut self,
        epoch: usize,
        agent: &Agent,
        test: &Dataset,
        loss1: f64,
        loss2: f64,
        messages: u64,
    ) -> Result<()> {
        let eval = evaluate(&agent.model, test, &agent.local_classes)?;
        self.records.push(MetricsRecord {
            epoch,
            agent: agent.id,
            method: self.method.to_string(),
            local_acc: eval.local_acc,
            remote_acc: eval.remote_acc,
            combined_acc: eval.combined_acc,
            loss1,
            loss2,
            messages,
            seconds: if self.timing {
                self.start.elapsed().as_secs_f64()
            } else {
                0.0
            },
        });
        self.last.insert(agent.id, eval);
        Ok(())
    }

    pub fn finish(self, messages: MessageLog) -> SimOutput {
        SimOutput {
            records: self.records,
            final_evaluations: self.last,
            messages,
            transfer: Vec::new(),
        }
    }
}

pub(crate) fn check_agents(agents: &[Agent], topology: &MeshTopology) -> Result<()> {
    if agents.is_empty() {
        return Err(Error::Config("simulation needs at least one agent".into()));
    }
    if agents.windows(2).any(|w| w[0].id >= w[1].id) {
        return Err(Error::Config("agents must be listed by strictly ascending id".into()));
    }
    if !agents.iter().map(|a| a.id).eq(topology.agent_ids().iter().copied()) {
        return Err(Error::Config("topology and agent list disagree on agent ids".into()));
    }
    Ok(())
}

fn prepare_pipelines(agents: &mut [Agent], topology: &MeshTopology, cfg: &SimConfig) -> Result<()> {
    let shapes: BTreeMap<AgentId, (usize, usize)> = agents
        .iter()
        .map(|a| Ok((a.id, a.model.hosted_layer()?.weights.shape())))
        .collect::<Result<_>>()?;
    for agent in agents.iter_mut() {
        if let Some(stray) = agent.pipelines.keys().find(|s| !topology.has_edge(**s, agent.id)) {
            return Err(Error::Config(format!(
                "agent {} hosts a pipeline from {stray} without a matching edge",
                agent.id
            )));
        }
        for source in topology.sources_of(agent.id) {
            if shapes[&source] != shapes[&agent.id] {
                return Err(Error::Config(format!(
                    "hosted layers of agents {source} {:?} and {} {:?} differ",
                    shapes[&source], agent.id, shapes[&agent.id]
                )));
            }
            if !agent.pipelines.contains_key(&source) {
                agent.add_pipeline(source, cfg.lr_transfer, cfg.transfer_momentum)?;
            }
        }
    }
    Ok(())
}

/// Runs `cfg.method` to completion and evaluates every agent on `test`
/// after each epoch (pair). Deterministic given the agents' seeds.
pub fn run_simulation(
    agents: &mut [Agent],
    topology: &MeshTopology,
    cfg: &SimConfig,
    train: &Dataset,
    test: &Dataset,
) -> Result<SimOutput> {
    check_agents(agents, topology)?;
    match cfg.method {
        Method::FedAvg(fed) => return baselines::run_fedavg(agents, &fed, cfg, train, test),
        Method::Gossip(gossip) => return baselines::run_gossip(agents, topology, &gossip, cfg, train, test),
        Method::Ours => prepare_pipelines(agents, topology, cfg)?,
        Method::None | Method::Kd(_) => {}
    }
    let empty = MeshTopology::new(topology.agent_ids().iter().copied(), [])?;
    let topology = if cfg.method == Method::None { &empty } else { topology };
    let sources: Vec<Vec<AgentId>> = agents.iter().map(|a| topology.sources_of(a.id)).collect();
    let frozen: Vec<bool> = sources.iter().map(|s| cfg.freeze_sources && s.is_empty()).collect();

    let mut log = MessageLog::new();
    let mut recorder = Recorder::new(cfg);
    let mut transfer_log = Vec::new();
    for epoch in 0..cfg.schedule.total_epochs {
        let snapshots: BTreeMap<AgentId, SourceSnapshot> = agents.iter().map(|a| (a.id, a.snapshot())).collect();
        let inputs_of = |i: usize| -> Vec<SourceSnapshot> { sources[i].iter().map(|s| snapshots[s].clone()).collect() };
        let mut loss1 = vec![0.0; agents.len()];
        let mut loss2 = vec![0.0; agents.len()];

        match (cfg.method, cfg.schedule.mode) {
            (Method::Kd(kd), _) => {
                for (i, agent) in agents.iter_mut().enumerate() {
                    if frozen[i] {
                        continue;
                    }
                    if sources[i].is_empty() {
                        loss1[i] = agent.local_epoch(train, cfg.batch_size, epoch)?;
                    } else {
                        let s = baselines::kd_epoch(agent, &inputs_of(i), train, cfg.batch_size, epoch, &kd, &mut log)?;
                        loss1[i] = s.cross_entropy;
                        loss2[i] = s.distance;
                    }
                }
            }
            (_, ScheduleMode::EpochInterleaved) => {
                for (i, agent) in agents.iter_mut().enumerate() {
                    if !frozen[i] {
                        loss1[i] = agent.local_epoch(train, cfg.batch_size, epoch)?;
                    }
                }
                // Sources are consumed as they stood when the transfer phase began.
                let phase: BTreeMap<AgentId, SourceSnapshot> = agents.iter().map(|a| (a.id, a.snapshot())).collect();
                for (i, agent) in agents.iter_mut().enumerate() {
                    if sources[i].is_empty() {
                        continue;
                    }
                    let inputs: Vec<SourceSnapshot> = sources[i].iter().map(|s| phase[s].clone()).collect();
                    let summary = transfer_epoch(agent, &inputs, train, cfg, epoch, &mut log)?;
                    loss2[i] = summary.loss2;
                    transfer_log.push((epoch + 1, agent.id, summary));
                }
            }
            (_, ScheduleMode::BatchInterleaved) => {
                for (i, agent) in agents.iter_mut().enumerate() {
                    let inputs = sorted_sources(&inputs_of(i));
                    for s in &inputs {
                        log.record(s.agent_id, agent.id, epoch);
                    }
                    let mut local = 0.0;
                    let mut summary = EpochSummary::default();
                    let batches = agent.epoch_batches(train, cfg.batch_size, epoch)?;
                    for batch in &batches {
                        if !frozen[i] {
                            local += agent.local_train_step(batch)?;
                        }
                        if !inputs.is_empty() {
                            let base = agent.model.hosted_layer()?.weights.clone();
                            summary.merge(&transfer_on_batch(agent, &inputs, &base, batch, cfg)?);
                        }
                    }
                    loss1[i] = local / batches.len() as f64;
                    if !inputs.is_empty() {
                        let summary = summary.finish();
                        loss2[i] = summary.loss2;
                        transfer_log.push((epoch + 1, agent.id, summary));
                    }
                }
            }
        }

        for (i, agent) in agents.iter().enumerate() {
            recorder.push(epoch + 1, agent, test, loss1[i], loss2[i], log.total())?;
        }
    }
    let mut out = recorder.finish(log);
    out.transfer = transfer_log;
    Ok(out)
}
