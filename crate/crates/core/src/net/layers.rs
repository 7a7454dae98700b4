//! Differentiable building blocks. Each forward returns whatever its backward
//! needs; backwards return input gradients and parameter gradients.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::FeatureMatrix;

/// Variance offset for instance and batch normalization.
pub const NORM_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Normalized activations and inverse standard deviations per channel.
#[derive(Debug, Clone)]
pub struct NormCache {
    xhat: FeatureMatrix,
    inv_std: Array1<f64>,
}

fn normalize_columns(x: &FeatureMatrix) -> (NormCache, Array1<f64>, Array1<f64>) {
    let n = x.nrows() as f64;
    let mean = x.sum_axis(Axis(0)) / n;
    let centered = x - &mean;
    let var = centered.mapv(|v| v * v).sum_axis(Axis(0)) / n;
    let inv_std = var.mapv(|v| 1.0 / (v + NORM_EPS).sqrt());
    let xhat = &centered * &inv_std;
    (NormCache { xhat, inv_std }, mean, var)
}

fn affine(xhat: &FeatureMatrix, gamma: &[f64], beta: &[f64]) -> FeatureMatrix {
    let mut out = xhat.clone();
    for mut row in out.rows_mut() {
        for ((o, g), b) in row.iter_mut().zip(gamma).zip(beta) {
            *o = *o * g + b;
        }
    }
    out
}

/// Per-channel standardization over the vertex axis followed by `γ·x̂ + β`.
/// Statistics come from the instance itself in every mode.
pub fn instance_norm(x: &FeatureMatrix, gamma: &[f64], beta: &[f64]) -> (FeatureMatrix, NormCache) {
    let (cache, _, _) = normalize_columns(x);
    (affine(&cache.xhat, gamma, beta), cache)
}

/// Gradients of a batch-statistics normalization: `(dx, dγ, dβ)`.
pub fn norm_backward(grad_out: &FeatureMatrix, cache: &NormCache, gamma: &[f64]) -> (FeatureMatrix, Vec<f64>, Vec<f64>) {
    let n = grad_out.nrows() as f64;
    let d_gamma = (grad_out * &cache.xhat).sum_axis(Axis(0));
    let d_beta = grad_out.sum_axis(Axis(0));
    let g = Array1::from(gamma.to_vec());
    let dxhat = grad_out * &g;
    let sum_dxhat = dxhat.sum_axis(Axis(0));
    let sum_dxhat_xhat = (&dxhat * &cache.xhat).sum_axis(Axis(0));
    let mut dx = dxhat * n;
    dx -= &sum_dxhat;
    dx -= &(&cache.xhat * &sum_dxhat_xhat);
    dx *= &(&cache.inv_std / n);
    (dx, d_gamma.to_vec(), d_beta.to_vec())
}

/// Exponential moving averages of batch-norm statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl RunningStats {
    pub fn new(channels: usize) -> Self {
        Self {
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
        }
    }
}

/// Training-mode batch norm over the sample axis. Updates `stats` with the
/// batch mean and unbiased batch variance.
pub fn batch_norm_train(
    x: &FeatureMatrix,
    gamma: &[f64],
    beta: &[f64],
    stats: &mut RunningStats,
) -> Result<(FeatureMatrix, NormCache)> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::BatchTooSmall(n));
    }
    let (cache, mean, var) = normalize_columns(x);
    let unbias = n as f64 / (n as f64 - 1.0);
    for c in 0..x.ncols() {
        stats.mean[c] = (1.0 - BN_MOMENTUM) * stats.mean[c] + BN_MOMENTUM * mean[c];
        stats.var[c] = (1.0 - BN_MOMENTUM) * stats.var[c] + BN_MOMENTUM * var[c] * unbias;
    }
    Ok((affine(&cache.xhat, gamma, beta), cache))
}

pub fn batch_norm_eval(x: &FeatureMatrix, gamma: &[f64], beta: &[f64], stats: &RunningStats) -> FeatureMatrix {
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        for (c, o) in row.iter_mut().enumerate() {
            *o = gamma[c] * (*o - stats.mean[c]) / (stats.var[c] + NORM_EPS).sqrt() + beta[c];
        }
    }
    out
}

/// `x · W + b` with `W` stored row-major as `in × out`.
pub fn linear(x: &FeatureMatrix, w: &[f64], b: &[f64]) -> FeatureMatrix {
    let w = weights(w, x.ncols(), b.len());
    let mut out = x.dot(&w);
    out += &ArrayView2::from_shape((1, b.len()), b).expect("bias row");
    out
}

fn weights(w: &[f64], rows: usize, cols: usize) -> ArrayView2<'_, f64> {
    ArrayView2::from_shape((rows, cols), w).expect("weight length matches layer shape")
}

/// `(dx, dW, db)` of [`linear`].
pub fn linear_backward(grad_out: &FeatureMatrix, x: &FeatureMatrix, w: &[f64]) -> (FeatureMatrix, Vec<f64>, Vec<f64>) {
    let w = weights(w, x.ncols(), grad_out.ncols());
    let dx = grad_out.dot(&w.t());
    let dw = x.t().dot(grad_out);
    let db = grad_out.sum_axis(Axis(0));
    (dx, dw.iter().copied().collect(), db.to_vec())
}

pub fn relu(x: &FeatureMatrix) -> FeatureMatrix {
    x.mapv(|v| v.max(0.0))
}

/// Passes the gradient where the input was strictly positive; the
/// subgradient at exactly zero is zero.
pub fn relu_backward(grad_out: &FeatureMatrix, x: &FeatureMatrix) -> FeatureMatrix {
    let mut g = grad_out.clone();
    g.zip_mut_with(x, |g, &x| {
        if x <= 0.0 {
            *g = 0.0;
        }
    });
    g
}

/// Gradient through `t = tanh(z)`, given the output `t`.
pub fn tanh_backward(grad_out: &FeatureMatrix, t: &FeatureMatrix) -> FeatureMatrix {
    let mut g = grad_out.clone();
    g.zip_mut_with(t, |g, &t| *g *= 1.0 - t * t);
    g
}

/// Per-channel mean over all rows.
pub fn global_avg_pool(x: &FeatureMatrix) -> Array1<f64> {
    x.sum_axis(Axis(0)) / x.nrows() as f64
}

pub fn global_avg_pool_backward(grad_out: &[f64], rows: usize) -> FeatureMatrix {
    let scale = 1.0 / rows as f64;
    Array2::from_shape_fn((rows, grad_out.len()), |(_, c)| grad_out[c] * scale)
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// `−log softmax(logits)[label]` and its gradient `softmax − onehot`.
pub fn cross_entropy(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if label >= logits.len() {
        return Err(Error::InvalidLabel {
            label,
            classes: logits.len(),
        });
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_total = logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
    let loss = log_total - (logits[label] - max);
    let mut grad = softmax(logits);
    grad[label] -= 1.0;
    Ok((loss, grad))
}

/// Mean cross-entropy over a batch of logit rows and the gradient of that
/// mean.
pub fn batch_cross_entropy(logits: &FeatureMatrix, labels: &[usize]) -> Result<(f64, FeatureMatrix)> {
    if logits.nrows() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} logit rows for {} labels",
            logits.nrows(),
            labels.len()
        )));
    }
    let n = labels.len() as f64;
    let mut total = 0.0;
    let mut grad = Array2::zeros(logits.dim());
    for (i, &label) in labels.iter().enumerate() {
        let row: Vec<f64> = logits.row(i).to_vec();
        let (loss, g) = cross_entropy(&row, label)?;
        total += loss;
        for (k, v) in g.into_iter().enumerate() {
            grad[[i, k]] = v / n;
        }
    }
    Ok((total / n, grad))
}
