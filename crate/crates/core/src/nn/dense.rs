//! Dense feed-forward classifier.
//!
//! Layers compute `x·W + b` on row-vector batches, so a layer's weight matrix
//! is `n_in × n_out`. Hidden layers use a rectifier, the output layer emits
//! raw logits.

use rand::Rng as _;

use super::Matrix;
use crate::rng::Rng;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    pub fn new(weights: Matrix, bias: Vec<f64>) -> Result<Self> {
        if bias.len() != weights.cols() {
            return Err(Error::shape("dense_layer", weights.shape(), (1, bias.len())));
        }
        Ok(DenseLayer { weights, bias })
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot(n_in: usize, n_out: usize, rng: &mut Rng) -> Self {
        let limit = (6.0 / (n_in + n_out) as f64).sqrt();
        let weights = Matrix::from_fn(n_in, n_out, |_, _| rng.random_range(-limit..=limit));
        DenseLayer {
            weights,
            bias: vec![0.0; n_out],
        }
    }

    pub fn n_in(&self) -> usize {
        self.weights.rows()
    }

    pub fn n_out(&self) -> usize {
        self.weights.cols()
    }

    pub fn affine(&self, x: &Matrix) -> Result<Matrix> {
        let mut z = x.matmul(&self.weights)?;
        z.add_row_broadcast(&self.bias)?;
        Ok(z)
    }
}

/// Gradient of one layer, shaped like its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

impl Gradients {
    pub fn zeros_like(net: &DenseNet) -> Self {
        Gradients {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weights: Matrix::zeros(l.n_in(), l.n_out()),
                    bias: vec![0.0; l.n_out()],
                })
                .collect(),
        }
    }

    pub fn slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|g| [g.weights.as_slice(), g.bias.as_slice()])
            .collect()
    }
}

/// Per-layer inputs and pre-activations recorded by [`DenseNet::forward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `inputs[i]` is what layer `i` consumed.
    pub inputs: Vec<Matrix>,
    /// `pre_activations[i]` is `inputs[i]·W_i + b_i`.
    pub pre_activations: Vec<Matrix>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    pub layers: Vec<DenseLayer>,
}

impl DenseNet {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("network needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].n_out() != pair[1].n_in() {
                return Err(Error::shape(
                    "dense_net",
                    pair[0].weights.shape(),
                    pair[1].weights.shape(),
                ));
            }
        }
        Ok(DenseNet { layers })
    }

    /// Builds `sizes[0] → sizes[1] → … → sizes[last]` with Glorot-uniform init.
    pub fn init(sizes: &[usize], rng: &mut Rng) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Config(format!("invalid layer sizes {sizes:?}")));
        }
        let layers = sizes.windows(2).map(|w| DenseLayer::glorot(w[0], w[1], rng)).collect();
        DenseNet::new(layers)
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].n_in()
    }

    pub fn n_classes(&self) -> usize {
        self.layers[self.layers.len() - 1].n_out()
    }

    /// Index of the layer just before the output layer.
    pub fn penultimate_index(&self) -> Result<usize> {
        if self.layers.len() < 2 {
            return Err(Error::Config("network has no penultimate layer".into()));
        }
        Ok(self.layers.len() - 2)
    }

    /// The penultimate layer, which must be square to host a transfer pipeline.
    pub fn hosted_layer(&self) -> Result<&DenseLayer> {
        let layer = &self.layers[self.penultimate_index()?];
        if layer.n_in() != layer.n_out() {
            return Err(Error::Config(format!(
                "penultimate layer is {}x{}, transfer needs a square layer",
                layer.n_in(),
                layer.n_out()
            )));
        }
        Ok(layer)
    }

    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, ForwardCache)> {
        if x.cols() != self.input_dim() {
            return Err(Error::shape("forward", x.shape(), self.layers[0].weights.shape()));
        }
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.affine(&h)?;
            let next = if i == last { z.clone() } else { z.map(relu) };
            inputs.push(std::mem::replace(&mut h, next));
            pre_activations.push(z);
        }
        Ok((
            h,
            ForwardCache {
                inputs,
                pre_activations,
            },
        ))
    }

    /// Logits only.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.input_dim() {
            return Err(Error::shape("predict", x.shape(), self.layers[0].weights.shape()));
        }
        let last = self.layers.len() - 1;
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.affine(&h)?;
            h = if i == last { z } else { z.map(relu) };
        }
        Ok(h)
    }

    /// Backpropagates `grad_logits` through the cached forward pass.
    pub fn backward(&self, cache: &ForwardCache, grad_logits: &Matrix) -> Result<Gradients> {
        let n = self.layers.len();
        if cache.inputs.len() != n || cache.pre_activations.len() != n {
            return Err(Error::Internal(format!(
                "forward cache holds {} layers, network has {n}",
                cache.inputs.len()
            )));
        }
        for (layer, (input, z)) in self.layers.iter().zip(cache.inputs.iter().zip(&cache.pre_activations)) {
            if input.cols() != layer.n_in() || z.cols() != layer.n_out() || z.rows() != input.rows() {
                return Err(Error::Internal("stale forward cache".into()));
            }
        }
        if grad_logits.shape() != cache.pre_activations[n - 1].shape() {
            return Err(Error::shape(
                "backward",
                grad_logits.shape(),
                cache.pre_activations[n - 1].shape(),
            ));
        }

        let mut layers = Vec::with_capacity(n);
        let mut delta = grad_logits.clone();
        for i in (0..n).rev() {
            if i != n - 1 {
                delta = delta.zip_map(&cache.pre_activations[i], |d, z| if z > 0.0 { d } else { 0.0 })?;
            }
            let weights = cache.inputs[i].t_matmul(&delta)?;
            let bias = delta.column_sums();
            if i > 0 {
                let upstream = delta.matmul_t(&self.layers[i].weights)?;
                layers.push(LayerGrad { weights, bias });
                delta = upstream;
            } else {
                layers.push(LayerGrad { weights, bias });
            }
        }
        layers.reverse();
        Ok(Gradients { layers })
    }

    /// Gradient of a scalar loss with respect to the pre-activation of layer
    /// `index`, given the gradient at the logits.
    pub fn backward_to_pre_activation(
        &self,
        cache: &ForwardCache,
        grad_logits: &Matrix,
        index: usize,
    ) -> Result<Matrix> {
        let n = self.layers.len();
        if index >= n || cache.pre_activations.len() != n {
            return Err(Error::Internal("stale forward cache".into()));
        }
        let mut delta = grad_logits.clone();
        for i in (index..n).rev() {
            if i != n - 1 {
                delta = delta.zip_map(&cache.pre_activations[i], |d, z| if z > 0.0 { d } else { 0.0 })?;
            }
            if i > index {
                delta = delta.matmul_t(&self.layers[i].weights)?;
            }
        }
        Ok(delta)
    }

    pub fn param_slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
            .collect()
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    /// Shapes as seen by the optimizer, one entry per parameter slice.
    pub fn param_lens(&self) -> Vec<usize> {
        self.param_slices().iter().map(|s| s.len()).collect()
    }

    pub fn same_architecture(&self, other: &DenseNet) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.weights.shape() == b.weights.shape())
    }
}

#[inline]
fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}
