//! Numerical verification toolkit for Kolmogorov-type hypoelliptic chain
//! models: the shear/dilation algebra, exact Gaussian transition kernels,
//! periodic grid fields with spectral calculus, evolution-family operators,
//! and the anisotropic quasi-metric geometry with its maximal functions.

pub mod chain;
pub mod error;
pub mod evolution;
pub mod field;
pub mod geometry;
pub mod gaussian;
pub mod quad;
pub mod verify;

pub use chain::{
    check_ellipticity, dilation, dilation_matrix, mat_exp, shear_matrix, sigma_embed, sym_sqrt,
    BlockMatrix, ChainParams, DiffusionProfile, ProfileKind,
};
pub use error::{Error, Result};
