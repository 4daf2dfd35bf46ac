//! Spectral transfer-tensor toolkit for qubit noise characterization.
//!
//! This crate simulates and analyzes non-Markovian qubit channels through
//! their Pauli-basis spectra. The pipeline runs in five stages:
//!
//! 1. [`noise`] generates ground-truth dynamical maps, either analytically
//!    (pure dephasing, amplitude damping) or by Monte-Carlo averaging of
//!    stochastic-Hamiltonian trajectories (correlated x/y noise).
//! 2. [`protocol`] simulates the measurement campaign: interleaved
//!    channel/projective-measurement circuits with state-preparation and
//!    measurement (SPAM) errors, producing geometric-sum signal series.
//! 3. [`pencil`] recovers channel eigenvalues from the signal series with
//!    the matrix-pencil method and cancels SPAM by combining the single-
//!    and double-measurement variants.
//! 4. [`ttm`] turns the eigenvalue trajectories into transfer-tensor
//!    spectra, memory-kernel rates, decoherence-rate integrals, the RHP
//!    non-Markovianity measure, and reconstructed noise correlation
//!    functions and power spectra.
//! 5. [`pta`] twirls non-Pauli channels into Pauli form and searches for
//!    the twirling basis that maximizes the RHP measure.
//!
//! The [`cli`] module drives named end-to-end pipelines from flat
//! `key = value` config files and writes plot-ready CSV output.

// index loops over the three Pauli axes mirror the per-axis formulas
#![allow(clippy::needless_range_loop)]

pub mod cli;
pub mod noise;
pub mod pauli;
pub mod pencil;
pub mod protocol;
pub mod pta;
pub mod ttm;

/// Errors shared across the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {found} ({context})")]
    DimensionMismatch {
        expected: usize,
        found: usize,
        context: &'static str,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("covariance matrix is not positive semidefinite: eigenvalue {eigenvalue:.6e}")]
    NonPositiveSemidefinite { eigenvalue: f64 },

    #[error("dynamical map at step {step} is singular")]
    SingularMap { step: usize },

    #[error("channel eigenvalue vanishes at axis {axis}, step {step}")]
    VanishingEigenvalue { axis: usize, step: usize },

    #[error("signal series of length {found} is too short: need at least {needed}")]
    SeriesTooShort { found: usize, needed: usize },

    #[error("config validation failed:\n{}", .0.join("\n"))]
    Config(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
