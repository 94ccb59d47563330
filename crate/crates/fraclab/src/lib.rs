//! Numerical laboratory for fractional operators on a periodic thin space,
//! their degenerate-weight extensions to the upper half space, and the
//! associated Ginzburg-Landau boundary-reaction gradient flow.
//!
//! The crate is organised around the objects it computes with:
//!
//! * [`special`] — Gamma-bearing constants, singular kernels, the backwards
//!   fundamental solution of the weighted heat operator and the
//!   Mittag-Leffler function.
//! * [`grid`] — the periodic thin lattice and the vertically graded
//!   half-space grid that regularises the weight `z^a`.
//! * [`nonlocal`] — kernel-sum implementations of the fractional Laplacian,
//!   the fractional heat operator and related quadratic densities.
//! * [`extension`] — the conjugate-gradient solver for the weighted
//!   extension problem and its Dirichlet-to-Neumann map.
//! * [`flow`] — IMEX time stepping for the boundary-reaction flow together
//!   with its energy and Bochner diagnostics.
//! * [`monitor`] — Gaussian-weighted monotone quantities, barrier bounds
//!   and the empirical constant sweeps, all reported as [`report::AuditReport`]s.
//! * [`harmonic`] — construction and certification of approximately
//!   stationary sphere-valued boundary data.
//! * [`experiments`] — the configurable experiment registry used by the CLI.

pub mod experiments;
pub mod extension;
pub mod flow;
pub mod grid;
pub mod harmonic;
pub mod linalg;
pub mod monitor;
pub mod nonlocal;
pub mod params;
pub mod quad;
pub mod report;
pub mod snapshot;
pub mod special;

pub use params::{FracParam, GaussianCenter};
pub use report::AuditReport;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported range: {0}")]
    UnsupportedRange(String),

    #[error("solver did not converge after {iterations} iterations (residual {residual:.3e})")]
    SolverDiverged { iterations: usize, residual: f64 },

    #[error("range error: {0}")]
    Range(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("blow-up warning: max |u| = {max_abs:.3} exceeds 1.5, explicit reaction stepped too coarsely")]
    BlowUp { max_abs: f64 },

    #[error("snapshot format error: {0}")]
    Snapshot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
