//! Run configuration.
//!
//! Configs are TOML files; every key is optional and falls back to the
//! baseline parameter set, and unknown keys are rejected. Dotted keys
//! (`market.r = 0.02`) and `[market]` tables are interchangeable.

use std::fs;
use std::path::Path;

use hjbvi_core::mortality::{GompertzParams, MortalityLaw};
use hjbvi_core::sim::{Scheme, SimConfig};
use hjbvi_core::{
    Error, Grid, LaborParams, MarketParams, ModelParams, ObstacleMode, PreferenceParams, Result,
    SolverConfig, Spacing, Upwind,
};
use serde::Deserialize;

#[derive(Debug, Clone, PartialEq, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub market: MarketSection,
    pub preferences: PreferenceSection,
    pub labor: LaborSection,
    pub annuity: AnnuitySection,
    pub mortality: MortalitySection,
    pub grid: GridSection,
    pub solver: SolverSection,
    pub simulation: SimulationSection,
    pub npr: NprSection,
    pub surface: SurfaceSection,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarketSection {
    pub r: f64,
    pub mu: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreferenceSection {
    pub beta: f64,
    pub gamma: f64,
    pub psi: f64,
    pub leisure: f64,
    pub alpha: f64,
    pub habit_speed: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LaborSection {
    pub wage: f64,
    pub max_labor: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnuitySection {
    /// Payout rate `k`; the fair rate at the evaluation age when absent.
    pub rate: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LawKind {
    Gompertz,
    ConstantForce,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MortalitySection {
    pub law: LawKind,
    pub age: f64,
    pub modal_age: f64,
    pub dispersion: f64,
    /// Used by `constant_force`.
    pub force: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub y_min: f64,
    pub y_max: f64,
    pub nodes: usize,
    pub spacing: Spacing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObstacleKind {
    Projection,
    Penalty,
    Disabled,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub max_sweeps: usize,
    pub tolerance: f64,
    pub obstacle: ObstacleKind,
    pub penalty_coefficient: f64,
    pub upwind: Upwind,
    pub max_leverage: f64,
    pub kappa_max: Option<f64>,
}

/// Mortality seen by simulated paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimMortality {
    /// Constant force equal to the force at the solve age, matching the
    /// stationary problem the policy was solved for.
    Stationary,
    /// The configured law, aging along each path.
    Aging,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSection {
    pub paths: usize,
    pub dt: f64,
    pub horizon: f64,
    pub seed: u64,
    pub y0: f64,
    pub z0: f64,
    pub scheme: Scheme,
    pub mortality: SimMortality,
    /// Number of paths written by `--trace`.
    pub trace_paths: usize,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NprSection {
    pub subjective_modal_ages: Vec<f64>,
    pub objective_modal_age: f64,
    pub age: f64,
    pub dispersion: f64,
    /// Market rate used to price the annuities.
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurfaceSection {
    pub ages: Vec<f64>,
    /// Modal ages of the companion survival curves.
    pub survival_modal_ages: Vec<f64>,
    /// Survival curves run from the solve age to this many years later.
    pub survival_years: f64,
    pub survival_step: f64,
}

impl Default for MarketSection {
    fn default() -> Self {
        let m = MarketParams::baseline();
        Self {
            r: m.r,
            mu: m.mu,
            sigma: m.sigma,
        }
    }
}

impl Default for PreferenceSection {
    fn default() -> Self {
        let p = PreferenceParams::baseline();
        Self {
            beta: p.beta,
            gamma: p.gamma,
            psi: p.psi,
            leisure: p.leisure,
            alpha: p.alpha,
            habit_speed: p.habit_speed,
        }
    }
}

impl Default for LaborSection {
    fn default() -> Self {
        let l = LaborParams::baseline();
        Self {
            wage: l.wage,
            max_labor: l.max_labor,
        }
    }
}

impl Default for MortalitySection {
    fn default() -> Self {
        let g = hjbvi_core::model::default_gompertz();
        Self {
            law: LawKind::Gompertz,
            age: g.age,
            modal_age: g.modal_age,
            dispersion: g.dispersion,
            force: 0.02,
        }
    }
}

impl Default for GridSection {
    fn default() -> Self {
        let g = Grid::default();
        Self {
            y_min: g.y_min,
            y_max: g.y_max,
            nodes: g.nodes,
            spacing: g.spacing,
        }
    }
}

impl Default for SolverSection {
    fn default() -> Self {
        let s = SolverConfig::default();
        Self {
            max_sweeps: s.max_sweeps,
            tolerance: s.tolerance,
            obstacle: ObstacleKind::Projection,
            penalty_coefficient: 1e8,
            upwind: s.upwind,
            max_leverage: s.max_leverage,
            kappa_max: s.kappa_max,
        }
    }
}

impl Default for SimulationSection {
    fn default() -> Self {
        let s = SimConfig::default();
        Self {
            paths: s.paths,
            dt: s.dt,
            horizon: s.horizon,
            seed: s.seed,
            y0: s.y0,
            z0: s.z0,
            scheme: s.scheme,
            mortality: SimMortality::Stationary,
            trace_paths: 10,
        }
    }
}

impl Default for NprSection {
    fn default() -> Self {
        Self {
            subjective_modal_ages: vec![60.0, 65.0, 70.0, 75.0, 80.0],
            objective_modal_age: 80.0,
            age: 60.0,
            dispersion: 10.0,
            rate: 0.02,
        }
    }
}

impl Default for SurfaceSection {
    fn default() -> Self {
        Self {
            ages: vec![60.0, 65.0, 70.0, 75.0, 80.0],
            survival_modal_ages: vec![75.0, 80.0, 85.0, 90.0],
            survival_years: 50.0,
            survival_step: 1.0,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::ConfigError(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::ConfigError(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Mortality law for an agent of the given age.
    pub fn law_at(&self, age: f64) -> Result<MortalityLaw> {
        let m = &self.mortality;
        let law = match m.law {
            LawKind::Gompertz => MortalityLaw::Gompertz(GompertzParams::new(age, m.modal_age, m.dispersion)?),
            LawKind::ConstantForce => MortalityLaw::ConstantForce { force: m.force },
        };
        law.validate()?;
        Ok(law)
    }

    /// Validated model parameters at `age`.
    pub fn model_at(&self, age: f64) -> Result<ModelParams> {
        let m = &self.market;
        let p = &self.preferences;
        let l = &self.labor;
        let market = MarketParams {
            r: m.r,
            mu: m.mu,
            sigma: m.sigma,
        };
        let preferences = PreferenceParams {
            beta: p.beta,
            gamma: p.gamma,
            psi: p.psi,
            leisure: p.leisure,
            alpha: p.alpha,
            habit_speed: p.habit_speed,
        };
        let labor = LaborParams {
            wage: l.wage,
            max_labor: l.max_labor,
        };
        // Check the inputs before pricing: a bad β would otherwise surface as
        // an annuity-integral failure instead of a violation list. `k` and `η`
        // are placeholders here and checked once priced.
        let provisional = ModelParams {
            market,
            preferences,
            labor,
            annuity_rate: f64::NAN,
            effective_rate: f64::NAN,
        };
        let violations: Vec<String> = provisional
            .validate()
            .iter()
            .filter(|v| !matches!(v.name, "finite" | "annuity rate" | "effective rate"))
            .map(ToString::to_string)
            .collect();
        if !violations.is_empty() {
            return Err(Error::ConfigError(violations.join("; ")));
        }
        let params =
            ModelParams::with_mortality(market, preferences, labor, &self.law_at(age)?, self.annuity.rate)?;
        params.ensure_valid()?;
        Ok(params)
    }

    pub fn model(&self) -> Result<ModelParams> {
        self.model_at(self.mortality.age)
    }

    pub fn grid(&self) -> Result<Grid> {
        let g = &self.grid;
        Grid::new(g.y_min, g.y_max, g.nodes, g.spacing)
    }

    pub fn solver(&self) -> Result<SolverConfig> {
        let s = &self.solver;
        let config = SolverConfig {
            max_sweeps: s.max_sweeps,
            tolerance: s.tolerance,
            obstacle: match s.obstacle {
                ObstacleKind::Projection => ObstacleMode::Projection,
                ObstacleKind::Penalty => ObstacleMode::Penalty {
                    coefficient: s.penalty_coefficient,
                },
                ObstacleKind::Disabled => ObstacleMode::Disabled,
            },
            upwind: s.upwind,
            max_leverage: s.max_leverage,
            kappa_max: s.kappa_max,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn sim(&self) -> Result<SimConfig> {
        let s = &self.simulation;
        let config = SimConfig {
            paths: s.paths,
            dt: s.dt,
            horizon: s.horizon,
            seed: s.seed,
            y0: s.y0,
            z0: s.z0,
            scheme: s.scheme,
        };
        config.validate()?;
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_the_baseline() {
        let c = RunConfig::from_toml_str("").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.model().unwrap(), ModelParams::baseline());
    }

    #[test]
    fn dotted_and_table_keys_agree() {
        let a = RunConfig::from_toml_str("market.r = 0.03\nsimulation.seed = 7\n").unwrap();
        let b = RunConfig::from_toml_str("[market]\nr = 0.03\n[simulation]\nseed = 7\n").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.market.r, 0.03);
        assert_eq!(a.simulation.seed, 7);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(
            RunConfig::from_toml_str("market.rate = 0.03"),
            Err(Error::ConfigError(_))
        ));
        assert!(RunConfig::from_toml_str("[bogus]\nx = 1").is_err());
    }

    #[test]
    fn invalid_alpha_lists_the_violation() {
        let c = RunConfig::from_toml_str("preferences.alpha = 0.0").unwrap();
        match c.model() {
            Err(Error::ConfigError(msg)) => assert!(msg.contains("alpha"), "{msg}"),
            other => panic!("expected a config error, got {other:?}"),
        }
    }
}
