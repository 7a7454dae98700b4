//! Polynomial joint densities `f(x, y) = Xᵀ A X` on [-1,1]², their analytic
//! marginals and the conditional densities used as convolution weights.

use super::basis::{Degree, MonomialBasis, MAX_BASIS, MAX_POWERS};
use crate::error::{Error, Result};

/// Ridge added to `B Bᵀ` so `A` is strictly positive definite.
pub const DEFAULT_RIDGE: f64 = 1e-6;

/// Symmetric matrix of size at most 6×6, stored densely.
pub type SymMatrix = [[f64; MAX_BASIS]; MAX_BASIS];

/// Coefficients `a[i][j]` of `x^i y^j`, zero where `i + j > d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointCoeffs {
    degree: Degree,
    a: [[f64; MAX_POWERS]; MAX_POWERS],
}

impl JointCoeffs {
    pub fn degree(&self) -> Degree {
        self.degree
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a[i][j]
    }

    pub(crate) fn raw(&self) -> &[[f64; MAX_POWERS]; MAX_POWERS] {
        &self.a
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let d = self.degree.get();
        let mut total = 0.0;
        let mut xi = 1.0;
        for i in 0..=d {
            let mut yj = 1.0;
            for j in 0..=d - i {
                total += self.a[i][j] * xi * yj;
                yj *= y;
            }
            xi *= x;
        }
        total
    }
}

/// `∫_{-1}^{1} y^j dy`: `2/(j+1)` for even `j`, zero for odd `j`.
pub fn monomial_integral(j: usize) -> f64 {
    if j % 2 == 0 {
        2.0 / (j as f64 + 1.0)
    } else {
        0.0
    }
}

/// Builds `A = B Bᵀ + ridge·I` for a symmetric `B` of the basis size.
pub fn coefficient_matrix(b: &SymMatrix, m: usize, ridge: f64) -> SymMatrix {
    let mut a = [[0.0; MAX_BASIS]; MAX_BASIS];
    for p in 0..m {
        for q in 0..m {
            a[p][q] = (0..m).map(|k| b[p][k] * b[q][k]).sum::<f64>();
        }
        a[p][p] += ridge;
    }
    a
}

/// Expands `Xᵀ (B Bᵀ + ridge·I) X` into monomial coefficients. Each ordered
/// pair of basis terms contributes `A[p][q]` to the coefficient of their
/// product.
pub fn expand_joint(b: &[Vec<f64>], ridge: f64) -> Result<JointCoeffs> {
    let m = b.len();
    let degree = match m {
        3 => Degree::TWO,
        6 => Degree::FOUR,
        other => return Err(Error::UnsupportedBasisSize(other)),
    };
    let mut dense = [[0.0; MAX_BASIS]; MAX_BASIS];
    for (p, row) in b.iter().enumerate() {
        if row.len() != m {
            return Err(Error::ShapeMismatch(format!("row {p} of B has {} entries", row.len())));
        }
        dense[p][..m].copy_from_slice(row);
    }
    Ok(joint_from_matrix(&degree.basis(), &coefficient_matrix(&dense, m, ridge)))
}

pub(crate) fn joint_from_matrix(basis: &MonomialBasis, a_mat: &SymMatrix) -> JointCoeffs {
    let mut a = [[0.0; MAX_POWERS]; MAX_POWERS];
    let terms = basis.terms();
    for (p, &(ip, jp)) in terms.iter().enumerate() {
        for (q, &(iq, jq)) in terms.iter().enumerate() {
            a[ip + iq][jp + jq] += a_mat[p][q];
        }
    }
    JointCoeffs {
        degree: basis.degree(),
        a,
    }
}

/// Coefficients `b_i` of the marginal `f_x(x) = ∫ f(x, y) dy` over [-1, 1].
pub fn marginal(joint: &JointCoeffs) -> Vec<f64> {
    let d = joint.degree.get();
    (0..=d)
        .map(|i| (0..=d - i).map(|j| joint.a[i][j] * monomial_integral(j)).sum())
        .collect()
}

fn eval_poly(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

/// A degree-2 or degree-4 polynomial density with learnable symmetric `B`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyFilter {
    basis: MonomialBasis,
    b: SymMatrix,
    a: SymMatrix,
    joint: JointCoeffs,
    marginal: [f64; MAX_POWERS],
}

impl PolyFilter {
    /// Builds a filter from the upper triangle of `B`, row-major, with the
    /// default ridge.
    pub fn from_params(degree: Degree, params: &[f64]) -> Result<Self> {
        Self::with_ridge(degree, params, DEFAULT_RIDGE)
    }

    pub fn with_ridge(degree: Degree, params: &[f64], ridge: f64) -> Result<Self> {
        let basis = degree.basis();
        let m = basis.len();
        if params.len() != basis.param_count() {
            return Err(Error::ShapeMismatch(format!(
                "degree {} filter takes {} parameters, got {}",
                degree.get(),
                basis.param_count(),
                params.len()
            )));
        }
        let mut b = [[0.0; MAX_BASIS]; MAX_BASIS];
        let mut k = 0;
        for p in 0..m {
            for q in p..m {
                b[p][q] = params[k];
                b[q][p] = params[k];
                k += 1;
            }
        }
        let a = coefficient_matrix(&b, m, ridge);
        let joint = joint_from_matrix(&basis, &a);
        let mut marg = [0.0; MAX_POWERS];
        for (i, v) in marginal(&joint).into_iter().enumerate() {
            marg[i] = v;
        }
        Ok(Self {
            basis,
            b,
            a,
            joint,
            marginal: marg,
        })
    }

    pub fn degree(&self) -> Degree {
        self.basis.degree()
    }

    pub fn basis(&self) -> &MonomialBasis {
        &self.basis
    }

    pub fn b_matrix(&self) -> Vec<Vec<f64>> {
        let m = self.basis.len();
        (0..m).map(|p| self.b[p][..m].to_vec()).collect()
    }

    pub fn a_matrix(&self) -> Vec<Vec<f64>> {
        let m = self.basis.len();
        (0..m).map(|p| self.a[p][..m].to_vec()).collect()
    }

    pub fn joint(&self) -> &JointCoeffs {
        &self.joint
    }

    pub fn marginal_coeffs(&self) -> &[f64] {
        &self.marginal[..=self.degree().get()]
    }

    /// Joint density `f(x, y)`.
    pub fn density(&self, x: f64, y: f64) -> f64 {
        self.joint.eval(x, y)
    }

    /// Marginal `f_x(x)`.
    pub fn marginal_density(&self, x: f64) -> f64 {
        eval_poly(self.marginal_coeffs(), x)
    }
}

/// Maps gradients on the joint coefficients `a_ij` back to the free upper
/// triangle of `B`, through `A = B Bᵀ + ridge·I` with `B` symmetric.
pub(crate) fn joint_grad_to_params(
    filter: &PolyFilter,
    d_a: &[[f64; MAX_POWERS]; MAX_POWERS],
    out: &mut [f64],
) {
    let terms = filter.basis.terms();
    let m = terms.len();
    let mut g_a = [[0.0; MAX_BASIS]; MAX_BASIS];
    for (p, &(ip, jp)) in terms.iter().enumerate() {
        for (q, &(iq, jq)) in terms.iter().enumerate() {
            g_a[p][q] = d_a[ip + iq][jp + jq];
        }
    }
    // dL/dM = (G + Gᵀ) M for A = M Mᵀ; G is symmetric here.
    let mut d_m = [[0.0; MAX_BASIS]; MAX_BASIS];
    for r in 0..m {
        for s in 0..m {
            d_m[r][s] = 2.0 * (0..m).map(|q| g_a[r][q] * filter.b[q][s]).sum::<f64>();
        }
    }
    let mut k = 0;
    for p in 0..m {
        for q in p..m {
            out[k] += if p == q { d_m[p][p] } else { d_m[p][q] + d_m[q][p] };
            k += 1;
        }
    }
}

pub(crate) fn clamp_feature(v: f64) -> f64 {
    debug_assert!(
        v.is_finite() && v.abs() <= 1.0 + 1e-9,
        "feature {v} outside [-1, 1]"
    );
    v.clamp(-1.0, 1.0)
}

/// Conditional density `f(y | x) = f(x, y) / f_x(x)`. Inputs are clamped to
/// [-1, 1].
pub fn conditional(filter: &PolyFilter, x: f64, y: f64) -> f64 {
    let (x, y) = (clamp_feature(x), clamp_feature(y));
    filter.density(x, y) / filter.marginal_density(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn identity(m: usize) -> Vec<Vec<f64>> {
        (0..m).map(|p| (0..m).map(|q| if p == q { 1.0 } else { 0.0 }).collect()).collect()
    }

    fn random_sym(m: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
        let mut b = vec![vec![0.0; m]; m];
        for p in 0..m {
            for q in p..m {
                let v = rng.gen_range(-1.0..1.0);
                b[p][q] = v;
                b[q][p] = v;
            }
        }
        b
    }

    /// Direct `Xᵀ B Bᵀ X` from the basis vector, bypassing the expansion.
    fn quadratic_form(b: &[Vec<f64>], x: f64, y: f64) -> f64 {
        let degree = if b.len() == 3 { Degree::TWO } else { Degree::FOUR };
        let xv = degree.basis().eval(x, y);
        let bt_x: Vec<f64> = (0..b.len()).map(|k| (0..b.len()).map(|p| b[p][k] * xv[p]).sum()).collect();
        bt_x.iter().map(|v| v * v).sum()
    }

    #[test]
    fn identity_expansions() {
        let j = expand_joint(&identity(3), 0.0).unwrap();
        for i in 0..=2 {
            for k in 0..=2 - i {
                let expect = if (i, k) == (0, 0) || (i, k) == (2, 0) || (i, k) == (0, 2) { 1.0 } else { 0.0 };
                assert_eq!(j.get(i, k), expect, "a[{i}][{k}]");
            }
        }
        let j = expand_joint(&identity(6), 0.0).unwrap();
        let ones = [(0, 0), (2, 0), (0, 2), (4, 0), (2, 2), (0, 4)];
        for i in 0..=4 {
            for k in 0..=4 - i {
                let expect = if ones.contains(&(i, k)) { 1.0 } else { 0.0 };
                assert_eq!(j.get(i, k), expect, "a[{i}][{k}]");
            }
        }
    }

    #[test]
    fn expansion_matches_pointwise_quadratic_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for m in [3, 6] {
            let b = random_sym(m, &mut rng);
            let j = expand_joint(&b, 0.0).unwrap();
            let mut worst: f64 = 0.0;
            for xi in 0..5 {
                for yi in 0..5 {
                    let (x, y) = (-1.0 + 0.5 * xi as f64, -1.0 + 0.5 * yi as f64);
                    worst = worst.max((j.eval(x, y) - quadratic_form(&b, x, y)).abs());
                }
            }
            assert!(worst < 1e-12, "m={m}: {worst}");
        }
    }

    #[test]
    fn unsupported_size() {
        assert!(matches!(expand_joint(&identity(4), 0.0), Err(Error::UnsupportedBasisSize(4))));
    }

    #[test]
    fn marginal_examples() {
        // f = 1 (B = e0 e0ᵀ, no ridge) integrates to 2.
        let f = PolyFilter::with_ridge(Degree::TWO, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0], 0.0).unwrap();
        assert_eq!(f.marginal_coeffs(), &[2.0, 0.0, 0.0]);
        // f = 1 + x² + y² integrates to 2x² + 8/3.
        let f = PolyFilter::with_ridge(Degree::TWO, &[1.0, 0.0, 0.0, 1.0, 0.0, 1.0], 0.0).unwrap();
        let b = f.marginal_coeffs();
        assert!((b[0] - 8.0 / 3.0).abs() < 1e-15);
        assert_eq!(b[1], 0.0);
        assert_eq!(b[2], 2.0);
    }

    #[test]
    fn odd_powers_of_y_do_not_reach_the_marginal() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let params: Vec<f64> = (0..21).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let f = PolyFilter::with_ridge(Degree::FOUR, &params, 0.0).unwrap();
        let mut even_only = *f.joint();
        for i in 0..5 {
            for j in (1..5).step_by(2) {
                even_only.a[i][j] = 0.0;
            }
        }
        assert_eq!(marginal(&even_only), marginal(f.joint()));
    }

    #[test]
    fn conditional_examples() {
        let uniform = PolyFilter::with_ridge(Degree::TWO, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0], 0.0).unwrap();
        for &(x, y) in &[(0.0, 0.0), (0.3, -0.9), (-1.0, 1.0)] {
            assert_eq!(conditional(&uniform, x, y), 0.5);
        }
        let id = PolyFilter::with_ridge(Degree::TWO, &[1.0, 0.0, 0.0, 1.0, 0.0, 1.0], 0.0).unwrap();
        assert!((conditional(&id, 0.0, 0.0) - 3.0 / 8.0).abs() < 1e-15);
    }
}
