//! Inverse-subdivision max pooling.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::FeatureMatrix;

/// For each coarse vertex, the fine-level vertices of its patch. The first
/// entry of every patch is the coarse vertex's own fine-level copy, which
/// shares its index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolMap {
    fine_count: usize,
    patches: Vec<Vec<usize>>,
}

impl PoolMap {
    /// Validates the coverage and self-copy invariants.
    pub fn new(patches: Vec<Vec<usize>>, fine_count: usize) -> Result<Self> {
        let mut covered = vec![false; fine_count];
        for (v, p) in patches.iter().enumerate() {
            if p.first() != Some(&v) {
                return Err(Error::ShapeMismatch(format!(
                    "patch {v} must start with its own index"
                )));
            }
            for &u in p {
                if u >= fine_count {
                    return Err(Error::ShapeMismatch(format!(
                        "patch {v} references fine vertex {u} of {fine_count}"
                    )));
                }
                covered[u] = true;
            }
        }
        if let Some(u) = covered.iter().position(|c| !c) {
            return Err(Error::ShapeMismatch(format!("fine vertex {u} is in no patch")));
        }
        Ok(Self {
            fine_count,
            patches,
        })
    }

    pub(crate) fn from_patches_unchecked(patches: Vec<Vec<usize>>, fine_count: usize) -> Self {
        Self {
            fine_count,
            patches,
        }
    }

    pub fn coarse_count(&self) -> usize {
        self.patches.len()
    }

    pub fn fine_count(&self) -> usize {
        self.fine_count
    }

    pub fn patch(&self, v: usize) -> &[usize] {
        &self.patches[v]
    }

    pub fn patches(&self) -> &[Vec<usize>] {
        &self.patches
    }

    /// Number of patches each fine vertex belongs to.
    pub fn multiplicity(&self) -> Vec<usize> {
        let mut m = vec![0; self.fine_count];
        for p in &self.patches {
            for &u in p {
                m[u] += 1;
            }
        }
        m
    }

    /// Relabels both levels: coarse `v` becomes `coarse_perm[v]`, fine `u`
    /// becomes `fine_perm[u]`. Patch order is kept except the self entry
    /// stays first.
    pub fn permuted(&self, coarse_perm: &[usize], fine_perm: &[usize]) -> Self {
        let mut patches = vec![Vec::new(); self.patches.len()];
        for (v, p) in self.patches.iter().enumerate() {
            patches[coarse_perm[v]] = p.iter().map(|&u| fine_perm[u]).collect();
        }
        Self {
            fine_count: self.fine_count,
            patches,
        }
    }
}

/// Max-pooled features plus, per output cell, the fine row that won.
#[derive(Debug, Clone)]
pub struct PoolOutput {
    pub features: FeatureMatrix,
    pub argmax: Array2<usize>,
}

/// Per-channel max over each coarse vertex's patch. Ties resolve to the
/// lowest fine-vertex index, which is also where the gradient is routed.
pub fn poly_pool(features: &FeatureMatrix, map: &PoolMap) -> Result<PoolOutput> {
    if features.nrows() != map.fine_count {
        return Err(Error::ShapeMismatch(format!(
            "pool expects {} rows, got {}",
            map.fine_count,
            features.nrows()
        )));
    }
    let c = features.ncols();
    let mut out = Array2::zeros((map.coarse_count(), c));
    let mut argmax = Array2::zeros((map.coarse_count(), c));
    for (v, patch) in map.patches.iter().enumerate() {
        for ch in 0..c {
            let mut best = patch[0];
            for &u in &patch[1..] {
                let (x, b) = (features[[u, ch]], features[[best, ch]]);
                if x > b || (x == b && u < best) {
                    best = u;
                }
            }
            out[[v, ch]] = features[[best, ch]];
            argmax[[v, ch]] = best;
        }
    }
    Ok(PoolOutput {
        features: out,
        argmax,
    })
}

/// Routes coarse gradients back to the winning fine rows.
pub fn poly_pool_backward(grad_out: &FeatureMatrix, argmax: &Array2<usize>, fine_count: usize) -> FeatureMatrix {
    let mut grad = Array2::zeros((fine_count, grad_out.ncols()));
    for ((v, ch), &g) in grad_out.indexed_iter() {
        grad[[argmax[[v, ch]], ch]] += g;
    }
    grad
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::primitives;
    use crate::polyshape::subdivide::{subdivide_ptq, subdivide_sqrt3};
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn equal_features_pass_through() {
        let (_, map) = subdivide_ptq(&primitives::tetrahedron());
        let f = Array2::from_elem((10, 3), 0.25);
        let out = poly_pool(&f, &map).unwrap();
        assert!(out.features.iter().all(|&x| x == 0.25));
        assert!(out.argmax.rows().into_iter().enumerate().all(|(v, r)| r.iter().all(|&a| a == v)));
    }

    #[test]
    fn shared_midpoint_spike_reaches_both_endpoints() {
        let t = primitives::tetrahedron();
        let (_, map) = subdivide_ptq(&t);
        let (a, b) = t.edges()[0];
        let mid = 4; // first edge's midpoint
        let mut f = Array2::zeros((10, 1));
        f[[mid, 0]] = 1.0;
        let out = poly_pool(&f, &map).unwrap();
        for v in 0..4 {
            let expect = if v == a || v == b { 1.0 } else { 0.0 };
            assert_eq!(out.features[[v, 0]], expect);
        }
    }

    #[test]
    fn row_mismatch_is_an_error() {
        let (_, map) = subdivide_sqrt3(&primitives::tetrahedron());
        assert!(poly_pool(&Array2::zeros((7, 1)), &map).is_err());
    }

    #[test]
    fn ties_route_to_lowest_index() {
        let map = PoolMap::new(vec![vec![0, 3, 2], vec![1, 2]], 4).unwrap();
        let f = Array2::from_shape_vec((4, 1), vec![0.0, 0.0, 5.0, 5.0]).unwrap();
        let out = poly_pool(&f, &map).unwrap();
        assert_eq!(out.argmax[[0, 0]], 2);
        let g = poly_pool_backward(&Array2::ones((2, 1)), &out.argmax, 4);
        assert_eq!(g.column(0).to_vec(), vec![0.0, 0.0, 2.0, 0.0]);
    }

    #[test]
    fn matches_brute_force_and_is_monotone() {
        let (_, map) = subdivide_sqrt3(&primitives::icosphere(1));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = Array2::from_shape_fn((map.fine_count(), 4), |_| rng.gen_range(-1.0..1.0));
        let out = poly_pool(&f, &map).unwrap();
        for v in 0..map.coarse_count() {
            for c in 0..4 {
                let brute = map.patch(v).iter().map(|&u| f[[u, c]]).fold(f64::NEG_INFINITY, f64::max);
                assert_eq!(out.features[[v, c]], brute);
            }
        }
        let mut raised = f.clone();
        raised[[17, 2]] += 0.5;
        let out2 = poly_pool(&raised, &map).unwrap();
        assert!(out2.features.iter().zip(out.features.iter()).all(|(a, b)| a >= b));
    }

    #[test]
    fn validation_rejects_bad_maps() {
        assert!(PoolMap::new(vec![vec![1]], 2).is_err());
        assert!(PoolMap::new(vec![vec![0]], 2).is_err());
        assert!(PoolMap::new(vec![vec![0, 5]], 2).is_err());
    }
}
