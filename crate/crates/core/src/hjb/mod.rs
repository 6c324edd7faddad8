//! Stationary HJB variational inequality in the wealth-to-habit ratio.
//!
//! The value function solves
//!
//! ```text
//! max{ sup_{p, κ ≥ α, b ∈ [0, b̄]} [u(κ, b) + L V] − η V,  G − V } = 0
//! L V = V′ [(r + ρ̃) y + p y (μ − r) − κ (1 + ρ̃ y) + w b] + ½ V″ σ² p² y²
//! ```
//!
//! on a one-dimensional grid. [`solve_vi`] runs Howard policy iteration on an
//! upwind monotone discretization, treating the stopping decision as one more
//! control, and [`boundary_diagnostics`] measures how well the discrete
//! solution satisfies value matching, smooth pasting and C² continuity at the
//! free boundaries.

mod boundary;
mod hamiltonian;
mod solver;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;

pub use boundary::{boundary_diagnostics, extract_thresholds, BoundaryDiagnostics, Thresholds};
pub use hamiltonian::{maximize_hamiltonian, ControlBounds, HamiltonianMax};
pub use solver::{complementarity_residuals, solve_vi};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    Uniform,
    Log,
}

/// Discretization of `y ∈ [y_min, y_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub y_min: f64,
    pub y_max: f64,
    pub nodes: usize,
    pub spacing: Spacing,
}

impl Default for Grid {
    fn default() -> Self {
        Self {
            y_min: 1e-3,
            y_max: 200.0,
            nodes: 2000,
            spacing: Spacing::Log,
        }
    }
}

impl Grid {
    pub fn new(y_min: f64, y_max: f64, nodes: usize, spacing: Spacing) -> Result<Self> {
        let g = Self {
            y_min,
            y_max,
            nodes,
            spacing,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.y_min > 0.0 && self.y_min < self.y_max && self.y_max.is_finite()) {
            return Err(Error::ConfigError(format!(
                "grid needs 0 < y_min < y_max, got [{}, {}]",
                self.y_min, self.y_max
            )));
        }
        if self.nodes < 3 {
            return Err(Error::ConfigError(format!(
                "grid needs at least 3 nodes, got {}",
                self.nodes
            )));
        }
        Ok(())
    }

    pub fn points(&self) -> Vec<f64> {
        let last = (self.nodes - 1) as f64;
        let mut pts: Vec<f64> = (0..self.nodes)
            .map(|i| {
                let s = i as f64 / last;
                match self.spacing {
                    Spacing::Uniform => self.y_min + s * (self.y_max - self.y_min),
                    Spacing::Log => self.y_min * (self.y_max / self.y_min).powf(s),
                }
            })
            .collect();
        pts[0] = self.y_min;
        pts[self.nodes - 1] = self.y_max;
        pts
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ObstacleMode {
    /// Stopping is a control: each node takes whichever of the continuation
    /// equation and `V = G` is binding, so `V = max(V, G)` at the fixed point.
    Projection,
    /// `η V − H(V) − P·max(G − V, 0) = 0`.
    Penalty { coefficient: f64 },
    /// No annuitization option.
    Disabled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Upwind {
    /// One-sided first differences chosen by the sign of the drift.
    DriftSign,
    /// Central first differences wherever they keep the scheme monotone.
    CentralWhenMonotone,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_sweeps: usize,
    /// Policy iteration stops once the largest relative update falls below this.
    pub tolerance: f64,
    pub obstacle: ObstacleMode,
    pub upwind: Upwind,
    /// Bound on `|p|`; also the portfolio used where `V″ ≥ 0`.
    pub max_leverage: f64,
    /// Upper bound for `κ`; `None` means `max(10, 2 k y_max)`.
    pub kappa_max: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_sweeps: 1000,
            tolerance: 1e-10,
            obstacle: ObstacleMode::Projection,
            upwind: Upwind::DriftSign,
            max_leverage: 50.0,
            kappa_max: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::ConfigError("solver tolerance must be positive".into()));
        }
        if self.max_sweeps == 0 {
            return Err(Error::ConfigError("solver needs at least one sweep".into()));
        }
        if let ObstacleMode::Penalty { coefficient } = self.obstacle {
            if !(coefficient > 0.0) {
                return Err(Error::ConfigError("penalty coefficient must be positive".into()));
            }
        }
        if !(self.max_leverage > 0.0) {
            return Err(Error::ConfigError("max_leverage must be positive".into()));
        }
        if let Some(k) = self.kappa_max {
            if !(k > 0.0) {
                return Err(Error::ConfigError("kappa_max must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    /// Working with `b* < b̄` (including `b* = 0`).
    Interior,
    /// Working at the labor cap `b* = b̄`.
    Corner,
    /// Annuitized.
    Stopped,
}

impl Region {
    pub fn as_str(self) -> &'static str {
        match self {
            Region::Interior => "interior",
            Region::Corner => "corner",
            Region::Stopped => "stopped",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "interior" => Ok(Region::Interior),
            "corner" => Ok(Region::Corner),
            "stopped" => Ok(Region::Stopped),
            other => Err(Error::ConfigError(format!("unknown region label `{other}`"))),
        }
    }
}

/// Convergence record and residuals of a solve.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SolveDiagnostics {
    /// `η V − u − L V` per node under the reported controls (zero where stopped).
    pub hjb_residual: Vec<f64>,
    /// `min(η V − H(V), V − G)` per node.
    pub complementarity: Vec<f64>,
    pub sweeps: usize,
    pub last_update: f64,
    /// Nodes where the discrete `V″` was not negative.
    pub nonconcave_nodes: Vec<usize>,
    pub boundary: BoundaryDiagnostics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub y: Vec<f64>,
    pub value: Vec<f64>,
    /// Annuitization payoff `G` on the grid.
    pub obstacle: Vec<f64>,
    pub p: Vec<f64>,
    pub kappa: Vec<f64>,
    pub b: Vec<f64>,
    pub region: Vec<Region>,
    pub thresholds: Thresholds,
    pub diagnostics: SolveDiagnostics,
    pub params: ModelParams,
    pub config: SolverConfig,
}

impl SolveResult {
    /// Index of the first stopped node.
    pub fn stop_index(&self) -> Option<usize> {
        self.region.iter().position(|r| *r == Region::Stopped)
    }

    /// Solver value at `y` by linear interpolation, `G(y)` beyond `y*`.
    pub fn value_at(&self, y: f64) -> f64 {
        if let Some(ys) = self.thresholds.y_star {
            if y >= ys {
                return crate::model::obstacle_unchecked(y, &self.params).g;
            }
        }
        let n = self.y.len();
        if y <= self.y[0] {
            return self.value[0];
        }
        if y >= self.y[n - 1] {
            return self.value[n - 1];
        }
        let i = self.y.partition_point(|&v| v <= y) - 1;
        let w = (y - self.y[i]) / (self.y[i + 1] - self.y[i]);
        self.value[i] * (1.0 - w) + self.value[i + 1] * w
    }

    /// True when region labels never step back from a later region to an earlier one.
    pub fn regions_ordered(&self) -> bool {
        let rank = |r: &Region| match r {
            Region::Interior => 0,
            Region::Corner => 1,
            Region::Stopped => 2,
        };
        self.region.windows(2).all(|w| rank(&w[0]) <= rank(&w[1]))
    }
}
