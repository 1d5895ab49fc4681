//! Gaussian variational inference through Stein-type gradient flows: kernels,
//! Gaussian targets, mean-field flows, particle systems and discrete algorithms.

pub mod algorithms;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod geometry;
pub mod kernels;
pub mod linalg;
pub mod meanfield;
pub mod particles;
pub mod quadrature;
pub mod targets;
pub mod trajectory;

pub use error::{Error, Result};
pub use linalg::{GaussianParams, Mat, RngSeed, SpdMatrix, SymMatrix, Vector};
