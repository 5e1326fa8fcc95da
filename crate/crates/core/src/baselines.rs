//! Comparison methods: logit distillation, federated averaging and
//! randomized pairwise gossip averaging.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::{Batch, Dataset};
use crate::nn::{cross_entropy, logit_distance, DenseNet, LogitDistance};
use crate::rng::{self, Rng};
use crate::sim::{Agent, Endpoint, MeshTopology, MessageLog, Recorder, SimConfig, SimOutput, SourceSnapshot};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KdConfig {
    pub lambda: f64,
    pub distance: LogitDistance,
}

impl KdConfig {
    pub fn new(lambda: f64, distance: LogitDistance) -> Result<Self> {
        if !lambda.is_finite() || lambda < 0.0 {
            return Err(Error::Config(format!(
                "kd lambda must be finite and >= 0, got {lambda}"
            )));
        }
        Ok(KdConfig { lambda, distance })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FedConfig {
    pub rounds: usize,
    pub local_epochs_per_round: usize,
    /// Weight each agent by its partition size instead of uniformly.
    pub sample_weighted: bool,
}

impl FedConfig {
    pub fn new(rounds: usize, local_epochs_per_round: usize) -> Result<Self> {
        if rounds == 0 || local_epochs_per_round == 0 {
            return Err(Error::Config("federated rounds and local epochs must be >= 1".into()));
        }
        Ok(FedConfig {
            rounds,
            local_epochs_per_round,
            sample_weighted: false,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GossipConfig {
    pub rounds: usize,
    /// `μ` in `(0, 1]`; 1 is plain pairwise averaging.
    pub mixing_weight: f64,
    /// Seed of the edge-selection stream.
    pub seed: u64,
}

impl GossipConfig {
    pub fn new(rounds: usize, mixing_weight: f64, seed: u64) -> Result<Self> {
        if rounds == 0 {
            return Err(Error::Config("gossip rounds must be >= 1".into()));
        }
        if !(mixing_weight > 0.0 && mixing_weight <= 1.0) {
            return Err(Error::Config(format!(
                "mixing weight must lie in (0, 1], got {mixing_weight}"
            )));
        }
        Ok(GossipConfig {
            rounds,
            mixing_weight,
            seed,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KdLosses {
    pub cross_entropy: f64,
    /// Mean logit distance over sources, before weighting by lambda.
    pub distance: f64,
    pub total: f64,
}

/// One update of all target parameters on
/// `CE + λ · mean_s distance(target logits, source logits)`.
/// With `λ = 0` the distance term is skipped and the step is exactly a local
/// training step.
pub fn kd_step(target: &mut Agent, sources: &[SourceSnapshot], batch: &Batch, cfg: &KdConfig) -> Result<KdLosses> {
    if sources.is_empty() {
        return Err(Error::Config(format!(
            "distillation into agent {} needs a source",
            target.id
        )));
    }
    if batch.labels.is_empty() {
        return Err(Error::Input("empty batch".into()));
    }
    let (logits, cache) = target.model.forward(&batch.x)?;
    let (ce, mut grad) = cross_entropy(&logits, &batch.labels)?;
    let mut distance = 0.0;
    if cfg.lambda != 0.0 {
        let k = cfg.lambda / sources.len() as f64;
        for s in sources {
            let (d, g) = logit_distance(&logits, &s.logits(&batch.x)?, cfg.distance)?;
            distance += d;
            grad = grad.zip_map(&g, |a, b| a + k * b)?;
        }
        distance /= sources.len() as f64;
    }
    let grads = target.model.backward(&cache, &grad)?;
    target
        .optimizer
        .step(&mut target.model.param_slices_mut(), &grads.slices())?;
    Ok(KdLosses {
        cross_entropy: ce,
        distance,
        total: ce + cfg.lambda * distance,
    })
}

/// A local epoch of `target` trained with [`kd_step`] against snapshots
/// taken at the start of the epoch. Logs one message per source.
pub fn kd_epoch(
    target: &mut Agent,
    sources: &[SourceSnapshot],
    data: &Dataset,
    batch_size: usize,
    epoch: usize,
    cfg: &KdConfig,
    log: &mut MessageLog,
) -> Result<KdLosses> {
    if sources.is_empty() {
        return Err(Error::Config(format!(
            "distillation into agent {} needs a source",
            target.id
        )));
    }
    for s in sources {
        log.record(s.agent_id, target.id, epoch);
    }
    let batches = target.epoch_batches(data, batch_size, epoch)?;
    let mut acc = KdLosses::default();
    for batch in &batches {
        let l = kd_step(target, sources, batch, cfg)?;
        acc.cross_entropy += l.cross_entropy;
        acc.distance += l.distance;
        acc.total += l.total;
    }
    let n = batches.len() as f64;
    Ok(KdLosses {
        cross_entropy: acc.cross_entropy / n,
        distance: acc.distance / n,
        total: acc.total / n,
    })
}

/// Element-wise mean of parameters, optionally weighted. Accumulated as a
/// running mean so that identical inputs reproduce themselves exactly.
pub fn average_parameters(models: &[&DenseNet], weights: Option<&[f64]>) -> Result<DenseNet> {
    let first = *models
        .first()
        .ok_or_else(|| Error::Config("nothing to average".into()))?;
    if let Some(other) = models.iter().find(|m| !m.same_architecture(first)) {
        return Err(Error::Config(format!(
            "cannot average architectures {:?} and {:?}",
            first.param_lens(),
            other.param_lens()
        )));
    }
    let weights: Vec<f64> = match weights {
        Some(w) if w.len() != models.len() => {
            return Err(Error::Input(format!("{} weights for {} models", w.len(), models.len())));
        }
        Some(w) if w.iter().any(|v| !(v.is_finite() && *v > 0.0)) => {
            return Err(Error::Input("averaging weights must be positive".into()));
        }
        Some(w) => w.to_vec(),
        None => vec![1.0; models.len()],
    };
    let mut mean = first.clone();
    let mut seen = weights[0];
    for (model, &w) in models.iter().zip(&weights).skip(1) {
        seen += w;
        let k = w / seen;
        for (dst, src) in mean.param_slices_mut().into_iter().zip(model.param_slices()) {
            for (m, x) in dst.iter_mut().zip(src) {
                *m += (x - *m) * k;
            }
        }
    }
    Ok(mean)
}

/// Local epochs on every agent, then the mean model replaces every agent's
/// model. Logs an upload and a download per agent. Returns each agent's
/// mean local loss.
pub fn fedavg_round(
    agents: &mut [Agent],
    cfg: &FedConfig,
    data: &Dataset,
    batch_size: usize,
    round: usize,
    log: &mut MessageLog,
) -> Result<Vec<f64>> {
    if let Some(a) = agents.iter().find(|a| !a.model.same_architecture(&agents[0].model)) {
        return Err(Error::Config(format!("agent {} differs in architecture", a.id)));
    }
    let mut losses = Vec::with_capacity(agents.len());
    for agent in agents.iter_mut() {
        let mut total = 0.0;
        for k in 0..cfg.local_epochs_per_round {
            total += agent.local_epoch(data, batch_size, round * cfg.local_epochs_per_round + k)?;
        }
        losses.push(total / cfg.local_epochs_per_round as f64);
    }
    let weights: Option<Vec<f64>> = cfg
        .sample_weighted
        .then(|| agents.iter().map(|a| a.partition.len() as f64).collect());
    let mean = average_parameters(&agents.iter().map(|a| &a.model).collect::<Vec<_>>(), weights.as_deref())?;
    for agent in agents.iter_mut() {
        log.record(agent.id, Endpoint::Aggregator, round);
        log.record(Endpoint::Aggregator, agent.id, round);
        agent.model = mean.clone();
    }
    Ok(losses)
}

/// `(1 − μ/2)·u + (μ/2)·v` and its mirror, written into both models.
pub fn mix_pair(u: &mut DenseNet, v: &mut DenseNet, mixing_weight: f64) -> Result<()> {
    if !u.same_architecture(v) {
        return Err(Error::Config("gossip partners differ in architecture".into()));
    }
    let keep = 1.0 - mixing_weight / 2.0;
    let take = mixing_weight / 2.0;
    for (a, b) in u.param_slices_mut().into_iter().zip(v.param_slices_mut()) {
        for (x, y) in a.iter_mut().zip(b.iter_mut()) {
            let (old_x, old_y) = (*x, *y);
            *x = keep * old_x + take * old_y;
            *y = keep * old_y + take * old_x;
        }
    }
    Ok(())
}

/// A local epoch on every agent, then one uniformly drawn neighbor pair
/// mixes parameters. Returns the agents' mean local losses.
#[allow(clippy::too_many_arguments)]
pub fn gossip_round(
    agents: &mut [Agent],
    topology: &MeshTopology,
    cfg: &GossipConfig,
    rng: &mut Rng,
    data: &Dataset,
    batch_size: usize,
    round: usize,
    log: &mut MessageLog,
) -> Result<Vec<f64>> {
    let pairs = topology.undirected_pairs();
    if pairs.is_empty() {
        return Err(Error::Config("gossip needs a topology with at least one edge".into()));
    }
    let losses = agents
        .iter_mut()
        .map(|a| a.local_epoch(data, batch_size, round))
        .collect::<Result<Vec<_>>>()?;
    let (u, v) = pairs[rng.random_range(0..pairs.len())];
    let iu = agents.iter().position(|a| a.id == u);
    let iv = agents.iter().position(|a| a.id == v);
    let (Some(iu), Some(iv)) = (iu, iv) else {
        return Err(Error::Config(format!("gossip edge {u}-{v} names a missing agent")));
    };
    let (lo, hi) = agents.split_at_mut(iv.max(iu));
    let (first, second) = (&mut lo[iu.min(iv)], &mut hi[0]);
    mix_pair(&mut first.model, &mut second.model, cfg.mixing_weight)?;
    log.record(u, v, round);
    log.record(v, u, round);
    Ok(losses)
}

pub(crate) fn run_fedavg(
    agents: &mut [Agent],
    fed: &FedConfig,
    cfg: &SimConfig,
    train: &Dataset,
    test: &Dataset,
) -> Result<SimOutput> {
    let mut log = MessageLog::new();
    let mut recorder = Recorder::new(cfg);
    for round in 0..fed.rounds {
        let losses = fedavg_round(agents, fed, train, cfg.batch_size, round, &mut log)?;
        for (agent, loss) in agents.iter().zip(losses) {
            recorder.push(round + 1, agent, test, loss, 0.0, log.total())?;
        }
    }
    Ok(recorder.finish(log))
}

pub(crate) fn run_gossip(
    agents: &mut [Agent],
    topology: &MeshTopology,
    gossip: &GossipConfig,
    cfg: &SimConfig,
    train: &Dataset,
    test: &Dataset,
) -> Result<SimOutput> {
    let mut rng = rng::seeded(gossip.seed);
    let mut log = MessageLog::new();
    let mut recorder = Recorder::new(cfg);
    for round in 0..gossip.rounds {
        let losses = gossip_round(
            agents,
            topology,
            gossip,
            &mut rng,
            train,
            cfg.batch_size,
            round,
            &mut log,
        )?;
        for (agent, loss) in agents.iter().zip(losses) {
            recorder.push(round + 1, agent, test, loss, 0.0, log.total())?;
        }
    }
    Ok(recorder.finish(log))
}
