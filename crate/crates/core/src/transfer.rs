//! Horizontal knowledge-transfer pipelines.
//!
//! A pipeline fuses a source agent's hosted layer `W_a` with the target's
//! own layer `W_b` through a learnable dense transform:
//!
//! ```text
//! W* = [W_a | W_b] · M + bias        M: 2n × n, bias: n
//! ```
//!
//! `W*` replaces the target's penultimate weights (the target keeps its own
//! layer bias). `M` starts as the selector `[0 ; I]`, so a fresh pipeline
//! reproduces the target layer exactly.
//!
//! The pipeline is trained on the weighted objective
//! `(α·CE(labels, Q) + β·KL(P ‖ Q)) / 2`, where `Q` is the target's output
//! distribution recomputed with `W*` installed and `P` the source's output
//! distribution on the same inputs.

use serde::{Deserialize, Serialize};

use crate::nn::{cross_entropy, kl_divergence, softmax, DenseNet, Matrix, SgdState};
use crate::sim::AgentId;
use crate::{Error, Result};

/// Tolerance on `alpha + beta == 1`.
const WEIGHT_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    alpha: f64,
    beta: f64,
}

impl LossWeights {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        if !in_unit(alpha) || !in_unit(beta) {
            return Err(Error::Config(format!(
                "loss weights ({alpha}, {beta}) must lie in [0, 1]"
            )));
        }
        if (alpha + beta - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::Config(format!(
                "loss weights must sum to 1, got {alpha} + {beta}"
            )));
        }
        Ok(LossWeights { alpha, beta })
    }

    /// `beta = 1 − alpha`.
    pub fn from_alpha(alpha: f64) -> Result<Self> {
        LossWeights::new(alpha, 1.0 - alpha)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { alpha: 0.5, beta: 0.5 }
    }
}

/// Which scalar the pipeline optimizer descends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PipelineObjective {
    /// `(α·loss1 + β·loss2) / 2`.
    #[default]
    Combined,
    /// `loss2` alone.
    Loss2Only,
}

/// `(α·loss1 + β·loss2) / 2`.
pub fn combined_loss(loss1: f64, loss2: f64, w: LossWeights) -> f64 {
    (w.alpha * loss1 + w.beta * loss2) / 2.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferModel {
    /// `2n × n`.
    pub m: Matrix,
    pub bias: Vec<f64>,
    pub optimizer: SgdState,
}

impl TransferModel {
    /// Selector initialization `M = [0 ; I]`, zero bias.
    pub fn selector(n: usize, learning_rate: f64, momentum: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("transfer model needs n >= 1".into()));
        }
        let m = Matrix::zeros(n, n).vstack(&Matrix::identity(n))?;
        let optimizer = SgdState::new(learning_rate, momentum, &[2 * n * n, n])?;
        Ok(TransferModel {
            m,
            bias: vec![0.0; n],
            optimizer,
        })
    }

    /// Square dimension of the hosted layer.
    pub fn dim(&self) -> usize {
        self.m.cols()
    }

    /// `W* = concat · M + bias`.
    pub fn apply(&self, concat: &Matrix) -> Result<Matrix> {
        apply_transfer(self, concat)
    }
}

/// Horizontal concatenation `[W_a | W_b]` of two equal square matrices.
pub fn concat_weights(w_a: &Matrix, w_b: &Matrix) -> Result<Matrix> {
    if w_a.rows() != w_a.cols() || w_a.shape() != w_b.shape() {
        return Err(Error::shape("concat_weights", w_a.shape(), w_b.shape()));
    }
    w_a.hconcat(w_b)
}

/// `W* = concat · M + bias`, with the bias broadcast over rows.
pub fn apply_transfer(tm: &TransferModel, concat: &Matrix) -> Result<Matrix> {
    let n = tm.dim();
    if tm.m.rows() != 2 * n || concat.shape() != (n, 2 * n) {
        return Err(Error::shape("apply_transfer", concat.shape(), tm.m.shape()));
    }
    let mut w_star = concat.matmul(&tm.m)?;
    w_star.add_row_broadcast(&tm.bias)?;
    Ok(w_star)
}

/// Diagnostic objective
/// `mean|xW* + b − (xW_a + b)| + mean|xW* + b − (xW_b + b)|`
/// over a batch `x` of hosted-layer inputs.
pub fn transfer_objective_l1(w_star: &Matrix, w_a: &Matrix, w_b: &Matrix, x: &Matrix, bias: &[f64]) -> Result<f64> {
    if w_star.shape() != w_a.shape() {
        return Err(Error::shape("transfer_objective_l1", w_star.shape(), w_a.shape()));
    }
    if w_star.shape() != w_b.shape() {
        return Err(Error::shape("transfer_objective_l1", w_star.shape(), w_b.shape()));
    }
    let out = |w: &Matrix| -> Result<Matrix> {
        let mut z = x.matmul(w)?;
        z.add_row_broadcast(bias)?;
        Ok(z)
    };
    let star = out(w_star)?;
    let count = (star.rows() * star.cols()) as f64;
    if count == 0.0 {
        return Ok(0.0);
    }
    let mean_abs = |other: &Matrix| -> f64 {
        star.as_slice()
            .iter()
            .zip(other.as_slice())
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / count
    };
    Ok(mean_abs(&out(w_a)?) + mean_abs(&out(w_b)?))
}

/// A transfer pipeline from one source agent into the target's
/// penultimate layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Pipeline {
    pub source: AgentId,
    pub target_layer: usize,
    pub model: TransferModel,
}

impl Pipeline {
    pub fn new(source: AgentId, target: &DenseNet, learning_rate: f64, momentum: f64) -> Result<Self> {
        let layer = target.hosted_layer()?;
        Ok(Pipeline {
            source,
            target_layer: target.penultimate_index()?,
            model: TransferModel::selector(layer.n_in(), learning_rate, momentum)?,
        })
    }

    /// `W*` for the given source layer and pipeline input layer.
    pub fn produce(&self, source_layer: &Matrix, input_layer: &Matrix) -> Result<Matrix> {
        self.model.apply(&concat_weights(source_layer, input_layer)?)
    }
}

/// What a pipeline consumes from the target's local batch.
#[derive(Debug, Clone, Copy)]
pub struct TransferBatch<'a> {
    pub x: &'a Matrix,
    pub labels: &'a [usize],
    /// Output distributions of every source on `x`. `loss2` is their mean
    /// KL divergence against the target.
    pub teachers: &'a [Matrix],
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepLosses {
    pub loss1: f64,
    pub loss2: f64,
    pub combined: f64,
    /// L1 fidelity diagnostic ([`transfer_objective_l1`]) before the update.
    pub l1_diagnostic: f64,
}

/// Gradient of the pipeline objective with respect to the transfer model.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineGrad {
    pub m: Matrix,
    pub bias: Vec<f64>,
    pub losses: StepLosses,
}

/// Installs `W*` from `pipeline` into `target`, recomputes the target's
/// outputs and returns the objective's gradient with respect to `M` and the
/// transfer bias. The target is left holding that `W*`.
pub fn pipeline_gradient(
    target: &mut DenseNet,
    pipeline: &Pipeline,
    source_layer: &Matrix,
    input_layer: &Matrix,
    batch: TransferBatch<'_>,
    weights: LossWeights,
    objective: PipelineObjective,
) -> Result<PipelineGrad> {
    if batch.teachers.is_empty() {
        return Err(Error::Config(
            "pipeline step needs at least one source distribution".into(),
        ));
    }
    let idx = pipeline.target_layer;
    if idx >= target.layers.len() {
        return Err(Error::Config(format!("target has no layer {idx}")));
    }
    let current = &target.layers[idx].weights;
    if current.shape() != input_layer.shape() || current.shape() != (pipeline.model.dim(), pipeline.model.dim()) {
        return Err(Error::shape("pipeline_step", current.shape(), input_layer.shape()));
    }

    let concat = concat_weights(source_layer, input_layer)?;
    let w_star = apply_transfer(&pipeline.model, &concat)?;
    target.layers[idx].weights = w_star;

    let (logits, cache) = target.forward(batch.x)?;
    let (loss1, grad1) = cross_entropy(&logits, batch.labels)?;
    let q = softmax(&logits);
    let mut loss2 = 0.0;
    let mut grad2 = Matrix::zeros(q.rows(), q.cols());
    for p in batch.teachers {
        let (l, g) = kl_divergence(p, &q)?;
        loss2 += l;
        grad2 = grad2.zip_map(&g, |a, b| a + b)?;
    }
    let n_teachers = batch.teachers.len() as f64;
    loss2 /= n_teachers;
    let grad2 = grad2.scale(1.0 / n_teachers);

    let grad_logits = match objective {
        PipelineObjective::Combined => {
            grad1.zip_map(&grad2, |g1, g2| (weights.alpha * g1 + weights.beta * g2) / 2.0)?
        }
        PipelineObjective::Loss2Only => grad2,
    };

    // dL/dW* = hᵀ·δ for the hosted layer; W* = C·M + 1·biasᵀ.
    let delta = target.backward_to_pre_activation(&cache, &grad_logits, idx)?;
    let grad_w_star = cache.inputs[idx].t_matmul(&delta)?;
    let grad_m = concat.t_matmul(&grad_w_star)?;
    let grad_bias = grad_w_star.column_sums();

    let l1_diagnostic = transfer_objective_l1(
        &target.layers[idx].weights,
        source_layer,
        input_layer,
        &cache.inputs[idx],
        &target.layers[idx].bias,
    )?;

    Ok(PipelineGrad {
        m: grad_m,
        bias: grad_bias,
        losses: StepLosses {
            loss1,
            loss2,
            combined: combined_loss(loss1, loss2, weights),
            l1_diagnostic,
        },
    })
}

/// One optimization step of a pipeline on a local batch.
///
/// Produces `W*` from `source_layer` and `input_layer`, installs it into the
/// target, evaluates both loss terms, takes one SGD step on the transfer
/// model and leaves the target holding the `W*` produced by the updated
/// model. Only the hosted layer's weights of `target` change. Returned
/// losses are measured before the update.
pub fn pipeline_step(
    target: &mut DenseNet,
    pipeline: &mut Pipeline,
    source_layer: &Matrix,
    input_layer: &Matrix,
    batch: TransferBatch<'_>,
    weights: LossWeights,
    objective: PipelineObjective,
) -> Result<StepLosses> {
    let grad = pipeline_gradient(target, pipeline, source_layer, input_layer, batch, weights, objective)?;
    let model = &mut pipeline.model;
    model.optimizer.step(
        &mut [model.m.as_mut_slice(), model.bias.as_mut_slice()],
        &[grad.m.as_slice(), grad.bias.as_slice()],
    )?;
    target.layers[pipeline.target_layer].weights = pipeline.produce(source_layer, input_layer)?;
    Ok(grad.losses)
}
