//! Polynomial-density filters and the PolyConv layer built on them.

mod basis;
mod conv;
mod filter;
pub mod gradcheck;
mod patch;

pub use basis::{Degree, MonomialBasis, MAX_BASIS};
pub use conv::{conv_backward, conv_forward, param_count, ConvGrads, ConvLayerSpec, ConvVariant, Patches};
pub use filter::{
    coefficient_matrix, conditional, expand_joint, marginal, monomial_integral, JointCoeffs, PolyFilter, DEFAULT_RIDGE,
};
pub use patch::patch_op;
