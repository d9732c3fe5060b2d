//! Numerical toolkit for the spectra of deformed random matrix models.
//!
//! Three classical deformations are covered: additive deformations of a Wigner
//! matrix, multiplicative deformations of a sample covariance matrix, and
//! information-plus-noise type models, together with their isotropic
//! (Haar-rotated) analogues. The limiting spectral distribution of each model
//! is a free convolution, and everything in this crate is computed through the
//! associated subordination functions:
//!
//! * [`measures`] — compactly supported probability measures and their scalar
//!   transforms (Cauchy-Stieltjes, reciprocal, moment generating, eta, and the
//!   rectangular `H` transform), plus Stieltjes inversion, cdf/quantile and
//!   moments.
//! * [`freeconv`] — fixed-point solvers for the additive and multiplicative
//!   subordination equations and for the self-consistent Stieltjes-transform
//!   equations of the three deformed models; densities of free convolutions;
//!   a moment-based free-cumulant oracle.
//! * [`support`] — admissible sets, the support maps `phi`/`varphi` and the
//!   interval-by-interval description of the limiting support with component
//!   masses and edge-regularity flags; deterministic-equivalent (mobile)
//!   edges for empirical atomic measures.
//! * [`spiked`] — outlier locations and eigenvector-overlap predictions for
//!   spiked deformations, including many-to-one isotropic outliers and the
//!   exact-separation index map.
//! * [`simlab`] — a seeded Monte Carlo lab that samples the matrix ensembles,
//!   diagonalizes them, and measures everything the analytic modules predict.
//!
//! All analytic computations are pure functions of immutable inputs and can be
//! evaluated from multiple threads concurrently.

pub mod freeconv;
mod linalg;
pub mod measures;
pub mod simlab;
pub mod spiked;
pub mod support;

pub use measures::Measure;
pub use support::DeformedModel;

use thiserror::Error;

/// Crate-wide error type.
///
/// Numerical operations never return garbage silently: evaluation at an
/// invalid point is a [`Error::Domain`] error and a fixed-point iteration
/// that fails to reach its tolerance is reported as [`Error::NoConvergence`]
/// with the last residual.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("range error: {0}")]
    Range(String),
    #[error("evaluation failed: {0}")]
    Evaluation(String),
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("division by zero in {0}")]
    DivisionByZero(&'static str),
    #[error("support has {0} components, limit is {1}")]
    ComponentOverflow(usize, usize),
    #[error("interval [{0}, {1}] does not sit inside a spectral gap")]
    Gap(f64, f64),
    #[error("spike {0} is not classified as an outlier")]
    NotAnOutlier(f64),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("matrix is not hermitian (max deviation {0:e})")]
    NotHermitian(f64),
    #[error("index error: {0}")]
    Index(String),
    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Stable 64-bit FNV-1a hash of a serialized configuration, used to stamp
/// outputs with the model they came from.
pub fn provenance_hash(bytes: &[u8]) -> String {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    format!("{h:016x}")
}
