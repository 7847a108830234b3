//! Numerical toolkit for the transfer-matrix spectrum of quasi-periodic
//! trigonometric integrable lattice chains, built around a separation-of-variables
//! (SoV) covector basis.
//!
//! The crate constructs the principal-gradation R-matrix and its twisted
//! monodromy, the fused transfer-matrix hierarchy `T_1..T_n`, an SoV basis
//! generated by transfer-matrix action, and cross-validates three independent
//! routes to the spectrum at desk scale:
//!
//! * dense diagonalization of `T_1` (the oracle),
//! * the discrete polynomial system satisfied by the samples `t_1(xi_a)`,
//! * the quantum spectral curve / Q-function functional equation.
//!
//! All scalars are double-precision complex; residuals are relative, normalized
//! by the largest participating magnitude. Fractional powers of the spectral
//! parameter use the principal branch of the *input* point, with internal
//! shifts done coherently in log space (see [`model`]).

pub mod config;
pub mod fusion;
pub mod model;
pub mod numerics;
pub mod pipeline;
pub mod qcurve;
pub mod report;
pub mod sov;
pub mod spectrum;

use thiserror::Error;

pub type C64 = num_complex::Complex<f64>;
pub type CMat = nalgebra::DMatrix<C64>;
pub type CVec = nalgebra::DVector<C64>;

/// Crate-wide error type. CLI exit codes map `Config`-class errors to 2 and
/// numerical-check failures to 1.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),
    #[error("twist spectrum is not simple: {0}")]
    NotSimpleSpectrum(String),
    #[error("degenerate twist: {0}")]
    DegenerateTwist(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("ill-posed interpolation: {0}")]
    IllPosedInterpolation(String),
    #[error("ill-conditioned reconstruction (condition estimate {0:.3e})")]
    IllConditioned(f64),
    #[error("refinement did not converge: {0}")]
    NonConvergence(String),
    #[error("SoV basis construction failed: {0}")]
    BasisFailure(String),
    #[error("hierarchy inconsistency: {0}")]
    HierarchyInconsistency(String),
    #[error("model inconsistency: {0}")]
    ModelInconsistency(String),
    #[error("Q-function kernel not unique or absent: {0}")]
    QKernel(String),
    #[error("Q-function form violation: {0}")]
    QForm(String),
    #[error("incomplete spectrum: {0}")]
    IncompleteSpectrum(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Relative deviation between two matrices, normalized by the larger magnitude.
pub fn rel_mat(a: &CMat, b: &CMat) -> f64 {
    let scale = mat_amax(a).max(mat_amax(b)).max(f64::MIN_POSITIVE);
    let mut worst = 0.0f64;
    for (x, y) in a.iter().zip(b.iter()) {
        worst = worst.max((x - y).norm());
    }
    worst / scale
}

/// Largest entry magnitude.
pub fn mat_amax(a: &CMat) -> f64 {
    a.iter().fold(0.0f64, |m, z| m.max(z.norm()))
}

/// Relative magnitude of a matrix against a reference scale.
pub fn rel_against(a: &CMat, scale: f64) -> f64 {
    mat_amax(a) / scale.max(f64::MIN_POSITIVE)
}
