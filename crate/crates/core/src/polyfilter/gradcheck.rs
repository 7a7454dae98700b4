//! Central finite-difference checks of analytic gradients.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::conv::{conv_backward, conv_forward, ConvLayerSpec, Patches};
use crate::error::Result;
use crate::FeatureMatrix;

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;
/// Floor on the relative-error denominator so gradients near zero are
/// compared absolutely.
pub const DENOMINATOR_FLOOR: f64 = 1e-4;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(DENOMINATOR_FLOOR)
}

/// Central differences of a scalar function at `x`.
pub fn central_differences(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let plus = f(&probe);
            probe[i] = x[i] - h;
            let minus = f(&probe);
            probe[i] = x[i];
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_relative_error: f64,
    pub worst_index: usize,
}

impl GradCheckReport {
    pub fn compare(analytic: &[f64], numeric: &[f64]) -> Self {
        assert_eq!(analytic.len(), numeric.len());
        let mut report = Self {
            checked: analytic.len(),
            max_relative_error: 0.0,
            worst_index: 0,
        };
        for (i, (&a, &n)) in analytic.iter().zip(numeric).enumerate() {
            let e = relative_error(a, n);
            if e > report.max_relative_error || e.is_nan() {
                report.max_relative_error = e;
                report.worst_index = i;
            }
        }
        report
    }

    /// Worst of two reports; indices of the second are offset past the first.
    pub fn merge(self, other: Self) -> Self {
        let checked = self.checked + other.checked;
        if other.max_relative_error > self.max_relative_error {
            Self {
                checked,
                max_relative_error: other.max_relative_error,
                worst_index: self.checked + other.worst_index,
            }
        } else {
            Self { checked, ..self }
        }
    }

    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_relative_error < tolerance
    }
}

/// Random connected instance: a ring plus a few chords, features in
/// (-0.9, 0.9).
pub fn random_instance(vertices: usize, channels: usize, rng: &mut impl Rng) -> (FeatureMatrix, Patches) {
    let mut lists: Vec<Vec<usize>> = (0..vertices).map(|v| vec![v]).collect();
    let link = |a: usize, b: usize, lists: &mut Vec<Vec<usize>>| {
        if a != b && !lists[a].contains(&b) {
            lists[a].push(b);
            lists[b].push(a);
        }
    };
    for v in 0..vertices {
        link(v, (v + 1) % vertices, &mut lists);
    }
    for _ in 0..vertices / 2 {
        let a = rng.gen_range(0..vertices);
        let b = rng.gen_range(0..vertices);
        link(a, b, &mut lists);
    }
    let features = Array2::from_shape_fn((vertices, channels), |_| rng.gen_range(-0.9..0.9));
    (features, Patches::from_lists(&lists).expect("non-empty patches"))
}

/// Checks `conv_backward` against central differences of `Σ out ⊙ R` for a
/// random weighting `R`, over every parameter and every input feature.
pub fn check_conv(spec: &ConvLayerSpec, vertices: usize, seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (features, patches) = random_instance(vertices, spec.in_channels, &mut rng);
    let params: Vec<f64> = spec
        .init_params(&mut rng)
        .iter()
        .map(|p| p + rng.gen_range(-0.3..0.3))
        .collect();
    let weights = Array2::from_shape_fn((vertices, spec.out_channels), |_| rng.gen_range(-1.0..1.0));
    let loss = |p: &[f64], f: &FeatureMatrix| -> f64 {
        let out = conv_forward(spec, p, f, &patches).expect("shapes checked");
        (&out * &weights).sum()
    };
    let grads = conv_backward(spec, &params, &features, &patches, &weights)?;

    let numeric_params = central_differences(|p| loss(p, &features), &params, DEFAULT_STEP);
    let flat: Vec<f64> = features.iter().copied().collect();
    let numeric_features = central_differences(
        |x| {
            let f = Array2::from_shape_vec(features.dim(), x.to_vec()).expect("same shape");
            loss(&params, &f)
        },
        &flat,
        DEFAULT_STEP,
    );
    let analytic_features: Vec<f64> = grads.features.iter().copied().collect();
    Ok(GradCheckReport::compare(&grads.params, &numeric_params)
        .merge(GradCheckReport::compare(&analytic_features, &numeric_features)))
}
