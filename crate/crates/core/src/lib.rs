//! Estimation of the hierarchically orthogonal functional decomposition of a
//! black-box response with dependent inputs, and of the generalized Sobol
//! sensitivity indices derived from it.
//!
//! The pipeline is: univariate systems re-orthonormalized on the sample
//! ([`univariate`]), hierarchically orthogonal multivariate basis
//! ([`hogs`]), sparse or dense least squares over that basis
//! ([`regression`]), and index estimation from the fitted components
//! ([`indices`]).

pub mod distributions;
pub mod error;
pub mod hogs;
pub mod indices;
pub mod linalg;
pub mod models;
pub mod pipeline;
pub mod regression;
pub mod subsets;
pub mod univariate;

pub use distributions::{InputSpec, Sample};
pub use error::{ErrorCategory, HofdError, Result};
pub use hogs::{build_hogs_basis, check_hierarchical_orthogonality, HofdBasis};
pub use subsets::{enumerate_subsets, Subset};
pub use univariate::UnivariateSystem;
