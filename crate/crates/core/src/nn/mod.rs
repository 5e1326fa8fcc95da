//! Minimal dense-network engine: matrices, forward and backward passes,
//! losses and SGD.

mod dense;
pub mod loss;
mod matrix;
mod sgd;

pub use dense::{DenseLayer, DenseNet, ForwardCache, Gradients, LayerGrad};
pub use loss::{cross_entropy, kl_divergence, logit_distance, softmax, LogitDistance};
pub use matrix::Matrix;
pub use sgd::SgdState;

/// `a · b`, see [`Matrix::matmul`].
pub fn matmul(a: &Matrix, b: &Matrix) -> crate::Result<Matrix> {
    a.matmul(b)
}
