//! Softmax, classification losses and their gradients.
//!
//! All losses are batch means. Gradients are returned with respect to the
//! logits that produced the predictions.

use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::{Error, Result};

/// Floor applied to predicted probabilities before taking a logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

/// Row-wise softmax with max subtraction.
pub fn softmax(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Mean negative log-likelihood and its gradient `(softmax − onehot) / batch`.
pub fn cross_entropy(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    if labels.len() != logits.rows() {
        return Err(Error::shape("cross_entropy", logits.shape(), (labels.len(), 1)));
    }
    if logits.rows() == 0 {
        return Err(Error::Input("cross_entropy on an empty batch".into()));
    }
    let k = logits.cols();
    if let Some((i, &y)) = labels.iter().enumerate().find(|(_, &y)| y >= k) {
        return Err(Error::Input(format!("label {y} at index {i} is outside [0, {k})")));
    }
    let batch = logits.rows() as f64;
    let mut grad = softmax(logits);
    let mut loss = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let row = logits.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - row[y];
        grad[(i, y)] -= 1.0;
    }
    let grad = grad.scale(1.0 / batch);
    Ok((loss / batch, grad))
}

/// Batch mean of row-wise `KL(p ‖ q)`.
///
/// `q` must be the softmax of some logits; the returned gradient is with
/// respect to those logits. Entries of `q` below [`PROB_FLOOR`] are clamped
/// inside the logarithm and contribute no gradient through it. Terms with
/// `p = 0` contribute nothing.
pub fn kl_divergence(p: &Matrix, q: &Matrix) -> Result<(f64, Matrix)> {
    if p.shape() != q.shape() {
        return Err(Error::shape("kl_divergence", p.shape(), q.shape()));
    }
    if p.rows() == 0 {
        return Err(Error::Input("kl_divergence on an empty batch".into()));
    }
    let batch = p.rows() as f64;
    let mut loss = 0.0;
    let mut grad = Matrix::zeros(q.rows(), q.cols());
    for i in 0..p.rows() {
        let (pr, qr) = (p.row(i), q.row(i));
        // Mass of p on entries whose log(q) is not clamped.
        let mut live_mass = 0.0;
        for (&pj, &qj) in pr.iter().zip(qr) {
            if pj > 0.0 {
                loss += pj * (pj.ln() - qj.max(PROB_FLOOR).ln());
            }
            if qj >= PROB_FLOOR {
                live_mass += pj;
            }
        }
        let g = grad.row_mut(i);
        for (j, (&pj, &qj)) in pr.iter().zip(qr).enumerate() {
            let own = if qj >= PROB_FLOOR { pj } else { 0.0 };
            g[j] = (qj * live_mass - own) / batch;
        }
    }
    Ok((loss / batch, grad))
}

/// Distance between student and teacher logits used by the distillation
/// baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LogitDistance {
    /// Mean over all entries of the squared difference.
    #[default]
    Mse,
    /// Mean over all entries of the absolute difference.
    L1,
}

/// Distance between `student` and `teacher` logits, with the gradient with
/// respect to `student`.
pub fn logit_distance(student: &Matrix, teacher: &Matrix, kind: LogitDistance) -> Result<(f64, Matrix)> {
    if student.shape() != teacher.shape() {
        return Err(Error::shape("logit_distance", student.shape(), teacher.shape()));
    }
    let count = (student.rows() * student.cols()) as f64;
    if count == 0.0 {
        return Err(Error::Input("logit_distance on an empty batch".into()));
    }
    let diff = student.zip_map(teacher, |s, t| s - t)?;
    let (loss, grad) = match kind {
        LogitDistance::Mse => (
            diff.as_slice().iter().map(|d| d * d).sum::<f64>() / count,
            diff.scale(2.0 / count),
        ),
        LogitDistance::L1 => (
            diff.as_slice().iter().map(|d| d.abs()).sum::<f64>() / count,
            diff.map(|d| {
                if d > 0.0 {
                    1.0 / count
                } else if d < 0.0 {
                    -1.0 / count
                } else {
                    0.0
                }
            }),
        ),
    };
    Ok((loss, grad))
}
