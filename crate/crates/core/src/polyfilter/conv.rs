//! Squeezed and unsqueezed PolyConv layers over vertex patches.

use ndarray::{Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::basis::{Degree, MAX_POWERS};
use super::filter::{clamp_feature, joint_grad_to_params, PolyFilter};
use super::patch::{powers, sample_grad, Kernel, Moments};
use crate::error::{Error, Result};
use crate::mesh::VertexAdjacency;
use crate::FeatureMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConvVariant {
    /// One filter per input channel, then a dense `C × C'` mix plus bias.
    Squeezed,
    /// One filter per (input, output) channel pair, summed over inputs.
    Unsqueezed,
}

impl std::str::FromStr for ConvVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "squeezed" => Ok(Self::Squeezed),
            "unsqueezed" => Ok(Self::Unsqueezed),
            other => Err(Error::Config(format!("unknown conv variant `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConvLayerSpec {
    pub variant: ConvVariant,
    pub in_channels: usize,
    pub out_channels: usize,
    pub degree: Degree,
}

impl ConvLayerSpec {
    pub fn new(variant: ConvVariant, in_channels: usize, out_channels: usize, degree: Degree) -> Self {
        Self {
            variant,
            in_channels,
            out_channels,
            degree,
        }
    }

    pub fn filter_count(&self) -> usize {
        match self.variant {
            ConvVariant::Squeezed => self.in_channels,
            ConvVariant::Unsqueezed => self.in_channels * self.out_channels,
        }
    }

    pub fn params_per_filter(&self) -> usize {
        self.degree.basis().param_count()
    }

    pub fn param_count(&self) -> usize {
        let filters = self.filter_count() * self.params_per_filter();
        match self.variant {
            ConvVariant::Squeezed => filters + self.in_channels * self.out_channels + self.out_channels,
            ConvVariant::Unsqueezed => filters,
        }
    }

    /// `B = I·√½` plus symmetric noise of scale 0.01; Xavier-uniform mixing
    /// weights and a zero bias.
    pub fn init_params<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let m = self.degree.basis().len();
        let noise = Normal::new(0.0, 0.01).expect("valid std");
        let mut params = Vec::with_capacity(self.param_count());
        for _ in 0..self.filter_count() {
            for p in 0..m {
                for q in p..m {
                    let base = if p == q { 0.5f64.sqrt() } else { 0.0 };
                    params.push(base + noise.sample(rng));
                }
            }
        }
        if self.variant == ConvVariant::Squeezed {
            let bound = (6.0 / (self.in_channels + self.out_channels) as f64).sqrt();
            for _ in 0..self.in_channels * self.out_channels {
                params.push(rng.gen_range(-bound..bound));
            }
            params.extend(std::iter::repeat(0.0).take(self.out_channels));
        }
        params
    }

    pub fn filters(&self, params: &[f64]) -> Result<Vec<PolyFilter>> {
        self.check_params(params)?;
        let k = self.params_per_filter();
        params[..self.filter_count() * k]
            .chunks_exact(k)
            .map(|chunk| PolyFilter::from_params(self.degree, chunk))
            .collect()
    }

    fn check_params(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::ShapeMismatch(format!(
                "conv layer expects {} parameters, got {}",
                self.param_count(),
                params.len()
            )));
        }
        Ok(())
    }

    fn mixing<'a>(&self, params: &'a [f64]) -> (ndarray::ArrayView2<'a, f64>, &'a [f64]) {
        let start = self.filter_count() * self.params_per_filter();
        let w_len = self.in_channels * self.out_channels;
        let w = ndarray::ArrayView2::from_shape((self.in_channels, self.out_channels), &params[start..start + w_len])
            .expect("length checked");
        (w, &params[start + w_len..])
    }
}

/// Learnable coefficient count of a layer.
pub fn param_count(spec: &ConvLayerSpec) -> usize {
    spec.param_count()
}

/// Per-vertex sample lists in compressed form. Every patch is non-empty.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Patches {
    offsets: Vec<usize>,
    indices: Vec<usize>,
}

impl Patches {
    /// Each vertex followed by its one-ring neighbors.
    pub fn from_adjacency(adj: &VertexAdjacency) -> Self {
        let mut offsets = Vec::with_capacity(adj.len() + 1);
        let mut indices = Vec::new();
        offsets.push(0);
        for (v, nbrs) in adj.iter().enumerate() {
            indices.push(v);
            indices.extend_from_slice(nbrs);
            offsets.push(indices.len());
        }
        Self { offsets, indices }
    }

    /// Arbitrary sample multisets, e.g. with repeated entries.
    pub fn from_lists(lists: &[Vec<usize>]) -> Result<Self> {
        let n = lists.len();
        let mut offsets = Vec::with_capacity(n + 1);
        let mut indices = Vec::new();
        offsets.push(0);
        for (v, list) in lists.iter().enumerate() {
            if list.is_empty() {
                return Err(Error::EmptyPatch(v));
            }
            if let Some(&u) = list.iter().find(|&&u| u >= n) {
                return Err(Error::ShapeMismatch(format!("patch {v} references vertex {u} of {n}")));
            }
            indices.extend_from_slice(list);
            offsets.push(indices.len());
        }
        Ok(Self { offsets, indices })
    }

    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn patch(&self, v: usize) -> &[usize] {
        &self.indices[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn to_lists(&self) -> Vec<Vec<usize>> {
        (0..self.len()).map(|v| self.patch(v).to_vec()).collect()
    }
}

fn check_shapes(spec: &ConvLayerSpec, features: &FeatureMatrix, patches: &Patches) -> Result<()> {
    if features.ncols() != spec.in_channels {
        return Err(Error::ShapeMismatch(format!(
            "conv expects {} input channels, got {}",
            spec.in_channels,
            features.ncols()
        )));
    }
    if features.nrows() != patches.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} feature rows for {} patches",
            features.nrows(),
            patches.len()
        )));
    }
    Ok(())
}

/// Visits every (vertex, channel) pair with the clamped center powers and
/// patch moments.
fn for_each_patch(
    features: &FeatureMatrix,
    patches: &Patches,
    degree: usize,
    mut f: impl FnMut(usize, usize, &[f64; MAX_POWERS + 1], &Moments, &[f64]),
) {
    let mut samples = Vec::new();
    let mut scratch = Vec::new();
    for v in 0..patches.len() {
        let patch = patches.patch(v);
        for c in 0..features.ncols() {
            samples.clear();
            samples.extend(patch.iter().map(|&u| clamp_feature(features[[u, c]])));
            let m = Moments::new(&samples, degree, &mut scratch);
            let xp = powers(clamp_feature(features[[v, c]]));
            f(v, c, &xp, &m, &samples);
        }
    }
}

fn squeezed_responses(kernels: &[Kernel], features: &FeatureMatrix, patches: &Patches, degree: usize) -> FeatureMatrix {
    let mut s = Array2::zeros(features.dim());
    for_each_patch(features, patches, degree, |v, c, xp, m, _| {
        s[[v, c]] = kernels[c].eval(xp, m).value;
    });
    s
}

pub fn conv_forward(
    spec: &ConvLayerSpec,
    params: &[f64],
    features: &FeatureMatrix,
    patches: &Patches,
) -> Result<FeatureMatrix> {
    check_shapes(spec, features, patches)?;
    let filters = spec.filters(params)?;
    let kernels: Vec<Kernel> = filters.iter().map(Kernel::new).collect();
    let degree = spec.degree.get();
    match spec.variant {
        ConvVariant::Squeezed => {
            let s = squeezed_responses(&kernels, features, patches, degree);
            let (w, bias) = spec.mixing(params);
            let mut out = s.dot(&w);
            for mut row in out.rows_mut() {
                for (o, b) in row.iter_mut().zip(bias) {
                    *o += b;
                }
            }
            Ok(out)
        }
        ConvVariant::Unsqueezed => {
            let co = spec.out_channels;
            let mut out = Array2::zeros((features.nrows(), co));
            for_each_patch(features, patches, degree, |v, c, xp, m, _| {
                for (o, k) in kernels[c * co..(c + 1) * co].iter().enumerate() {
                    out[[v, o]] += k.eval(xp, m).value;
                }
            });
            Ok(out)
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConvGrads {
    pub features: FeatureMatrix,
    pub params: Vec<f64>,
}

/// Exact gradients of [`conv_forward`] with respect to the input features and
/// every layer parameter, given the upstream gradient of the output.
pub fn conv_backward(
    spec: &ConvLayerSpec,
    params: &[f64],
    features: &FeatureMatrix,
    patches: &Patches,
    upstream: &FeatureMatrix,
) -> Result<ConvGrads> {
    check_shapes(spec, features, patches)?;
    if upstream.dim() != (features.nrows(), spec.out_channels) {
        return Err(Error::ShapeMismatch(format!(
            "upstream gradient is {:?}, expected ({}, {})",
            upstream.dim(),
            features.nrows(),
            spec.out_channels
        )));
    }
    let filters = spec.filters(params)?;
    let kernels: Vec<Kernel> = filters.iter().map(Kernel::new).collect();
    let degree = spec.degree.get();
    let mut grad_params = vec![0.0; spec.param_count()];
    let mut d_joint = vec![[[0.0; MAX_POWERS]; MAX_POWERS]; filters.len()];
    let mut grad_features = Array2::zeros(features.dim());

    // Gradient reaching each filter response D_f(v).
    let response_grad: FeatureMatrix = match spec.variant {
        ConvVariant::Squeezed => {
            let s = squeezed_responses(&kernels, features, patches, degree);
            let (w, _) = spec.mixing(params);
            let start = spec.filter_count() * spec.params_per_filter();
            let w_len = spec.in_channels * spec.out_channels;
            let g_w = s.t().dot(upstream);
            grad_params[start..start + w_len]
                .iter_mut()
                .zip(g_w.iter())
                .for_each(|(g, v)| *g = *v);
            let g_b = upstream.sum_axis(Axis(0));
            grad_params[start + w_len..]
                .iter_mut()
                .zip(g_b.iter())
                .for_each(|(g, v)| *g = *v);
            upstream.dot(&w.t())
        }
        ConvVariant::Unsqueezed => upstream.clone(),
    };

    let co = spec.out_channels;
    for_each_patch(features, patches, degree, |v, c, xp, m, samples| {
        let mut d_x = 0.0;
        let mut d_p = [0.0; MAX_POWERS + 1];
        let range = match spec.variant {
            ConvVariant::Squeezed => c..c + 1,
            ConvVariant::Unsqueezed => c * co..(c + 1) * co,
        };
        for fi in range {
            let up = match spec.variant {
                ConvVariant::Squeezed => response_grad[[v, c]],
                ConvVariant::Unsqueezed => response_grad[[v, fi - c * co]],
            };
            let k = &kernels[fi];
            let ev = k.eval(xp, m);
            k.backward(xp, m, &ev, up, &mut d_x, &mut d_p, &mut d_joint[fi]);
        }
        grad_features[[v, c]] += d_x;
        for (&u, &y) in patches.patch(v).iter().zip(samples) {
            grad_features[[u, c]] += sample_grad(&d_p, degree, y);
        }
    });

    let k = spec.params_per_filter();
    for (fi, filter) in filters.iter().enumerate() {
        joint_grad_to_params(filter, &d_joint[fi], &mut grad_params[fi * k..(fi + 1) * k]);
    }
    Ok(ConvGrads {
        features: grad_features,
        params: grad_params,
    })
}
