use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported basis: degree 4 gives six monomials.
pub const MAX_BASIS: usize = 6;
/// Largest supported polynomial degree plus one.
pub const MAX_POWERS: usize = 5;

/// Polynomial degree of a filter's joint density. Only 2 and 4 are supported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct Degree(usize);

impl Degree {
    pub const TWO: Degree = Degree(2);
    pub const FOUR: Degree = Degree(4);

    pub fn new(d: usize) -> Result<Self> {
        match d {
            2 | 4 => Ok(Self(d)),
            other => Err(Error::UnsupportedDegree(other)),
        }
    }

    pub fn get(self) -> usize {
        self.0
    }

    pub fn basis(self) -> MonomialBasis {
        MonomialBasis::new(self)
    }
}

impl TryFrom<usize> for Degree {
    type Error = Error;

    fn try_from(d: usize) -> Result<Self> {
        Degree::new(d)
    }
}

impl From<Degree> for usize {
    fn from(d: Degree) -> usize {
        d.0
    }
}

/// Monomials `x^i y^j` with `i + j <= d/2`, ordered by total degree then by
/// decreasing power of x: `[1, x, y]` or `[1, x, y, x², xy, y²]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MonomialBasis {
    degree: Degree,
    terms: Vec<(usize, usize)>,
}

impl MonomialBasis {
    pub fn new(degree: Degree) -> Self {
        let half = degree.get() / 2;
        let terms = (0..=half)
            .flat_map(|total| (0..=total).rev().map(move |i| (i, total - i)))
            .collect();
        Self { degree, terms }
    }

    pub fn degree(&self) -> Degree {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[(usize, usize)] {
        &self.terms
    }

    /// Free entries of a symmetric `m × m` coefficient matrix.
    pub fn param_count(&self) -> usize {
        let m = self.len();
        m * (m + 1) / 2
    }

    pub fn eval(&self, x: f64, y: f64) -> Vec<f64> {
        self.terms
            .iter()
            .map(|&(i, j)| x.powi(i as i32) * y.powi(j as i32))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_and_order() {
        let b2 = Degree::TWO.basis();
        assert_eq!(b2.terms(), &[(0, 0), (1, 0), (0, 1)]);
        assert_eq!(b2.param_count(), 6);
        let b4 = Degree::FOUR.basis();
        assert_eq!(b4.terms(), &[(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]);
        assert_eq!(b4.param_count(), 21);
        assert!(Degree::new(3).is_err());
        assert!(Degree::new(6).is_err());
    }
}
