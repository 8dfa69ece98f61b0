//! Solver for the advective Cahn-Hilliard equation on 3D voxel domains.
//!
//! The spatial discretization is a mixed interior-penalty discontinuous
//! Galerkin method on broken polynomial spaces over a voxel set; at order
//! zero it reduces to a cell-centered finite volume scheme. Time stepping
//! uses a semi-implicit convex-concave splitting of the double-well energy
//! density, and each step solves a Schur-reduced nonlinear system in the
//! order parameter alone with a damped inexact Newton-Krylov method.
//!
//! Both constant and degenerate mobility are supported; the degenerate case
//! suppresses bulk diffusion and can freeze entirely for piecewise-constant
//! fields at the bulk values.
//!
//! # Module map
//!
//! - [`grid`] - voxel-set triangulation: indexing, faces, boundary classes
//! - [`basis`] - modal tensor-Legendre basis, quadrature, L2 projection
//! - [`phi`] - double-well energy density and its convex-concave split
//! - [`velocity`] - prescribed advection fields (analytic or per-face file)
//! - [`operators`] - block-sparse assembly of all bilinear/linear forms
//! - [`stepper`] - per-step system build, Schur residual, time advance
//! - [`newton`] - damped Newton iteration with Armijo backtracking
//! - [`krylov`] - restarted GMRES with right preconditioning
//! - [`fastdiag`] - tensor-product fast-diagonalization preconditioner
//! - [`diagnostics`] - mass, discrete energy, error norms, line samples
//! - [`mms`] - manufactured solution and source terms for verification
//! - [`config`] - flat key-value scenario configuration
//! - [`scenarios`] - convergence, spinodal, droplet, breakthrough drivers
//! - [`io`] - VTK / CSV / mask / coefficient-dump readers and writers

pub mod basis;
pub mod config;
pub mod diagnostics;
pub mod fastdiag;
pub mod grid;
pub mod io;
pub mod krylov;
pub mod mms;
pub mod newton;
pub mod operators;
pub mod phi;
pub mod rng;
pub mod scenarios;
pub mod stepper;
pub mod velocity;

pub use basis::{DGField, QuadratureRule, ReferenceBasis};
pub use config::{Scenario, ScenarioConfig};
pub use grid::{FaceClass, VoxelGrid};
pub use operators::BlockSparseOperator;
pub use stepper::{SolverParams, StepReport, Stepper};
pub use velocity::VelocityField;

/// Errors surfaced by the solver library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Configuration file or parameter is invalid.
    #[error("config error: {0}")]
    Config(String),
    /// Input data (mask, velocity file, coefficient dump) is malformed.
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// The occupancy mask selects no elements.
    #[error("empty domain: mask selects no voxels")]
    EmptyDomain,
    /// Degenerate mobility vanished on every element of an order-zero run;
    /// the discrete solution cannot evolve from this state.
    #[error("frozen state: clamped mobility is zero on every element (p = 0, degenerate mobility)")]
    FrozenState,
    /// The Newton iteration failed to reach its stopping rule.
    #[error("nonlinear solver did not converge: {0}")]
    NonConvergence(String),
    /// The Krylov solver broke down or hit its iteration cap.
    #[error("linear solver failure: {0}")]
    KrylovFailure(String),
    /// An internal precondition was violated.
    #[error("contract violation: {0}")]
    Contract(String),
    /// Underlying I/O failure.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: 2 config, 3 solver, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidInput(_) | Error::EmptyDomain | Error::Contract(_) => 2,
            Error::FrozenState | Error::NonConvergence(_) | Error::KrylovFailure(_) => 3,
            Error::Io(_) => 4,
        }
    }
}
