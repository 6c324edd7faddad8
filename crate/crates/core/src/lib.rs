//! Retirement with habit formation, endogenous labor and an irreversible
//! annuitization option.
//!
//! The crate is organised bottom-up:
//!
//! - [`numerics`] — quadrature, root finding and finite differences;
//! - [`mortality`] — Gompertz and constant-force laws, discounting and annuity pricing;
//! - [`model`] — parameters, utility, reduced dynamics and the annuitization payoff `G`;
//! - [`hjb`] — the stationary variational inequality solver and its free boundaries;
//! - [`policy`] — policy tables, closed-form cross-checks and export;
//! - [`sim`] — Monte Carlo evaluation of a policy.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod hjb;
pub mod model;
pub mod mortality;
pub mod numerics;
pub mod policy;
pub mod sim;

pub use error::{Error, Result};
pub use hjb::{
    boundary_diagnostics, complementarity_residuals, extract_thresholds, maximize_hamiltonian, solve_vi,
    BoundaryDiagnostics, ControlBounds, Grid, HamiltonianMax, ObstacleMode, Region, SolveDiagnostics,
    SolveResult, SolverConfig, Spacing, Thresholds, Upwind,
};
pub use model::{LaborParams, MarketParams, ModelParams, ObstacleValue, PreferenceParams, Violation};
pub use mortality::{DiscountSpec, GompertzParams, MortalityLaw};
