use std::collections::{BTreeMap, BTreeSet};

use super::{AgentId, SourceAdvertisement};
use crate::data::{batches, Batch, Dataset, DatasetPartition};
use crate::nn::{cross_entropy, softmax, DenseNet, Matrix, SgdState};
use crate::rng::{self, Stream};
use crate::transfer::Pipeline;
use crate::{Error, Result};

/// One participant: a model, its optimizer, its private data view and the
/// pipelines it hosts for incoming transfer.
#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub id: AgentId,
    pub model: DenseNet,
    pub optimizer: SgdState,
    pub partition: DatasetPartition,
    /// Classes this agent was assigned; drives local/remote accuracy.
    pub local_classes: BTreeSet<usize>,
    pub pipelines: BTreeMap<AgentId, Pipeline>,
    /// Root of this agent's private random streams.
    pub seed: u64,
}

impl Agent {
    pub fn new(
        id: AgentId,
        model: DenseNet,
        learning_rate: f64,
        momentum: f64,
        partition: DatasetPartition,
        local_classes: BTreeSet<usize>,
        seed: u64,
    ) -> Result<Self> {
        if partition.owner != id {
            return Err(Error::Config(format!(
                "agent {id} given the partition of agent {}",
                partition.owner
            )));
        }
        let optimizer = SgdState::new(learning_rate, momentum, &model.param_lens())?;
        Ok(Agent {
            id,
            model,
            optimizer,
            partition,
            local_classes,
            pipelines: BTreeMap::new(),
            seed,
        })
    }

    /// Glorot-initialized model drawn from this agent's init stream.
    pub fn init_model(sizes: &[usize], seed: u64) -> Result<DenseNet> {
        DenseNet::init(sizes, &mut rng::stream(seed, 0, Stream::Init))
    }

    /// Shuffle seed for local epoch `epoch`.
    pub fn epoch_seed(&self, epoch: usize) -> u64 {
        rng::derive_seed(self.seed, 0, Stream::Epoch(epoch as u64))
    }

    pub fn epoch_batches(&self, data: &Dataset, batch_size: usize, epoch: usize) -> Result<Vec<Batch>> {
        batches(&self.partition, data, batch_size, self.epoch_seed(epoch))
    }

    /// Forward, cross-entropy, backward and one SGD step over every layer.
    /// Returns the batch loss before the step.
    pub fn local_train_step(&mut self, batch: &Batch) -> Result<f64> {
        if batch.labels.is_empty() {
            return Err(Error::Input("empty batch".into()));
        }
        let (logits, cache) = self.model.forward(&batch.x)?;
        let (loss, grad) = cross_entropy(&logits, &batch.labels)?;
        let grads = self.model.backward(&cache, &grad)?;
        self.optimizer
            .step(&mut self.model.param_slices_mut(), &grads.slices())?;
        Ok(loss)
    }

    /// One pass over the agent's partition. Returns the mean batch loss.
    pub fn local_epoch(&mut self, data: &Dataset, batch_size: usize, epoch: usize) -> Result<f64> {
        let batches = self.epoch_batches(data, batch_size, epoch)?;
        let mut total = 0.0;
        for batch in &batches {
            total += self.local_train_step(batch)?;
        }
        Ok(total / batches.len() as f64)
    }

    /// Registers a selector-initialized pipeline from `source`.
    pub fn add_pipeline(&mut self, source: AgentId, learning_rate: f64, momentum: f64) -> Result<()> {
        if source == self.id {
            return Err(Error::Config(format!("agent {source} cannot feed itself")));
        }
        let pipeline = Pipeline::new(source, &self.model, learning_rate, momentum)?;
        self.pipelines.insert(source, pipeline);
        Ok(())
    }

    pub fn snapshot(&self) -> SourceSnapshot {
        SourceSnapshot {
            agent_id: self.id,
            model: self.model.clone(),
        }
    }

    pub fn advertisement(&self, data: &Dataset) -> Result<SourceAdvertisement> {
        let shape = self.model.hosted_layer()?.weights.shape();
        Ok(SourceAdvertisement::new(
            self.id,
            self.partition.class_counts(data),
            shape,
        ))
    }
}

/// Frozen copy of a source's weights. Holds no sample data; the only
/// cross-agent reads are its hosted layer and its outputs on the target's
/// own inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceSnapshot {
    pub agent_id: AgentId,
    model: DenseNet,
}

impl SourceSnapshot {
    pub fn new(agent_id: AgentId, model: DenseNet) -> Self {
        SourceSnapshot { agent_id, model }
    }

    pub fn hosted_weights(&self) -> Result<&Matrix> {
        Ok(&self.model.hosted_layer()?.weights)
    }

    pub fn logits(&self, x: &Matrix) -> Result<Matrix> {
        self.model.predict(x)
    }

    /// Output distribution on `x`.
    pub fn distribution(&self, x: &Matrix) -> Result<Matrix> {
        Ok(softmax(&self.model.predict(x)?))
    }
}
