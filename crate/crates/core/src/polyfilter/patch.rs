//! The patch operator: a sample mean of `y · f(y | x)` over a vertex's patch.
//!
//! Because `f(y | x)` is polynomial in `y` over a marginal that depends only
//! on `x`, the mean reduces to power sums of the patch samples:
//!
//! `D = (1 / (n · f_x(x))) · Σ_{i,j} a_ij x^i P_{j+1}`, with `P_k = Σ_u y_u^k`.
//!
//! The power sums are shared by every filter reading the same channel.

use super::basis::MAX_POWERS;
use super::filter::{clamp_feature, monomial_integral, PolyFilter};
use crate::error::{Error, Result};

/// Sums with a balanced reduction tree.
pub(crate) fn pairwise_sum(values: &[f64]) -> f64 {
    const BASE: usize = 8;
    if values.len() <= BASE {
        return values.iter().sum();
    }
    let (lo, hi) = values.split_at(values.len() / 2);
    pairwise_sum(lo) + pairwise_sum(hi)
}

/// Sample count and power sums `P_1..=P_{d+1}` of one patch (`p[k]` holds
/// `P_k`; `p[0]` is unused).
#[derive(Debug, Clone, Copy)]
pub(crate) struct Moments {
    pub n: f64,
    pub p: [f64; MAX_POWERS + 1],
}

impl Moments {
    pub fn new(samples: &[f64], degree: usize, scratch: &mut Vec<f64>) -> Self {
        let mut p = [0.0; MAX_POWERS + 1];
        scratch.clear();
        scratch.extend_from_slice(samples);
        for pk in p.iter_mut().take(degree + 2).skip(1) {
            *pk = pairwise_sum(scratch);
            for (s, &y) in scratch.iter_mut().zip(samples) {
                *s *= y;
            }
        }
        Self {
            n: samples.len() as f64,
            p,
        }
    }
}

/// `x^0 ..= x^MAX_POWERS`.
pub(crate) fn powers(x: f64) -> [f64; MAX_POWERS + 1] {
    let mut out = [1.0; MAX_POWERS + 1];
    for k in 1..out.len() {
        out[k] = out[k - 1] * x;
    }
    out
}

/// Flattened filter coefficients for the hot loop.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Kernel {
    d: usize,
    a: [[f64; MAX_POWERS]; MAX_POWERS],
    b: [f64; MAX_POWERS],
}

/// Intermediate values of one kernel application.
#[derive(Debug, Clone, Copy)]
pub(crate) struct KernelEval {
    pub num: f64,
    pub marginal: f64,
    pub value: f64,
}

impl Kernel {
    pub fn new(filter: &PolyFilter) -> Self {
        let mut b = [0.0; MAX_POWERS];
        b[..filter.marginal_coeffs().len()].copy_from_slice(filter.marginal_coeffs());
        Self {
            d: filter.degree().get(),
            a: *filter.joint().raw(),
            b,
        }
    }

    pub fn eval(&self, xp: &[f64; MAX_POWERS + 1], m: &Moments) -> KernelEval {
        let mut num = 0.0;
        let mut marginal = 0.0;
        for i in 0..=self.d {
            let mut q = 0.0;
            for j in 0..=self.d - i {
                q += self.a[i][j] * m.p[j + 1];
            }
            num += q * xp[i];
            marginal += self.b[i] * xp[i];
        }
        KernelEval {
            num,
            marginal,
            value: num / (m.n * marginal),
        }
    }

    /// Accumulates `up · ∂D` into the center gradient, the power-sum
    /// gradients and the joint-coefficient gradients.
    pub fn backward(
        &self,
        xp: &[f64; MAX_POWERS + 1],
        m: &Moments,
        ev: &KernelEval,
        up: f64,
        d_x: &mut f64,
        d_p: &mut [f64; MAX_POWERS + 1],
        d_a: &mut [[f64; MAX_POWERS]; MAX_POWERS],
    ) {
        if up == 0.0 {
            return;
        }
        let g = ev.marginal;
        let scale = up / (m.n * g);
        let ratio = ev.num / g;
        let mut num_x = 0.0;
        let mut g_x = 0.0;
        for i in 0..=self.d {
            let xi = xp[i];
            let dxi = if i > 0 { i as f64 * xp[i - 1] } else { 0.0 };
            g_x += self.b[i] * dxi;
            for j in 0..=self.d - i {
                let pk = m.p[j + 1];
                num_x += self.a[i][j] * dxi * pk;
                d_p[j + 1] += scale * self.a[i][j] * xi;
                d_a[i][j] += scale * xi * (pk - monomial_integral(j) * ratio);
            }
        }
        *d_x += up * (num_x * g - ev.num * g_x) / (m.n * g * g);
    }
}

/// Gradient of the power sums with respect to one sample value.
pub(crate) fn sample_grad(d_p: &[f64; MAX_POWERS + 1], degree: usize, y: f64) -> f64 {
    let mut total = 0.0;
    let mut ypow = 1.0;
    for (k, &dp) in d_p.iter().enumerate().take(degree + 2).skip(1) {
        total += dp * k as f64 * ypow;
        ypow *= y;
    }
    total
}

/// Weighted sample mean `(1/n) Σ_u y_u f(y_u | x)` over the patch samples.
/// Include the center's own value in `samples` to count it in the patch.
pub fn patch_op(filter: &PolyFilter, x_center: f64, samples: &[f64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyPatch(0));
    }
    let clamped: Vec<f64> = samples.iter().map(|&y| clamp_feature(y)).collect();
    let d = filter.degree().get();
    let m = Moments::new(&clamped, d, &mut Vec::with_capacity(samples.len()));
    let xp = powers(clamp_feature(x_center));
    Ok(Kernel::new(filter).eval(&xp, &m).value)
}
