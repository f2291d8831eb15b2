//! Robust statistics toolkit built around weighted maximum-likelihood
//! estimation for the multivariate Student-t distribution.
//!
//! The crate provides
//! - [`numkernel`]: small dense SPD linear algebra (Cholesky, solves, log-determinants),
//! - [`distributions`]: Student-t, projected normal and wrapped Cauchy densities,
//!   samplers and the projected-normal / wrapped-Cauchy parameter conversions,
//! - [`estimators`]: the generalized multivariate myriad filter (GMMF), the EM
//!   baseline, Tyler's scatter estimator and the wrapped Cauchy fixed point,
//! - [`denoise`]: nonlocal patch-based denoising of real- and circle-valued images,
//! - [`imaging`]: image containers, PGM/MYR1 I/O, noise synthesis and quality metrics.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod denoise;
pub mod distributions;
pub mod error;
pub mod estimators;
pub mod imaging;
pub mod numkernel;
pub mod rng;
mod summation;

pub use distributions::{StudentTParams, WrappedCauchyParams};
pub use error::{Error, Result};
pub use estimators::{
    EstimateResult, EstimatorOptions, FeasibilityReport, Mode, SampleSet, WeightVector,
    WrappedCauchyEstimate,
};
pub use imaging::{Image, S1Image};
pub use numkernel::{CholeskyFactor, SpdMatrix};
