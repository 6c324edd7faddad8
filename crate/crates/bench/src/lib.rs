//! Fixtures shared by the criterion benchmarks in `benches/`.

use hjbvi_core::mortality::{DiscountSpec, GompertzParams, MortalityLaw};
use hjbvi_core::policy::PolicyTable;
use hjbvi_core::sim::SimConfig;
use hjbvi_core::{solve_vi, Grid, ModelParams, SolverConfig};

/// Baseline Gompertz law at age 60.
pub fn gompertz_60() -> GompertzParams {
    GompertzParams::new(60.0, 80.0, 10.0).expect("baseline law is valid")
}

/// Baseline discounting: `β` plus the age-60 Gompertz force.
pub fn baseline_discount() -> DiscountSpec {
    DiscountSpec::new(0.03, MortalityLaw::Gompertz(gompertz_60())).expect("valid")
}

/// Log grid with `nodes` points over the default range.
pub fn grid(nodes: usize) -> Grid {
    Grid {
        nodes,
        ..Grid::default()
    }
}

/// Baseline policy solved on a `nodes`-point grid.
pub fn baseline_policy(nodes: usize) -> PolicyTable {
    let result = solve_vi(&grid(nodes), &ModelParams::baseline(), &SolverConfig::default())
        .expect("baseline solve converges");
    PolicyTable::from_solve(&result, 60.0)
}

/// Path discounting matching the solver's stationary rate.
pub fn stationary_discount(table: &PolicyTable) -> DiscountSpec {
    let beta = table.params.preferences.beta;
    DiscountSpec::new(
        beta,
        MortalityLaw::ConstantForce {
            force: table.eta - beta,
        },
    )
    .expect("valid")
}

/// A short simulation: `paths` paths, coarse step, 50-year horizon.
pub fn small_sim(paths: usize) -> SimConfig {
    SimConfig {
        paths,
        dt: 0.01,
        horizon: 50.0,
        ..SimConfig::default()
    }
}
