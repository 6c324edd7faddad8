use crate::error::{Error, Result};
use crate::model::{drift_diffusion_y, marginal_utility_labor_unchecked, utility_unchecked, ModelParams};
use crate::numerics::find_root_bracketed;

/// Maximizing controls and the maximized Hamiltonian at one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HamiltonianMax {
    pub p: f64,
    pub kappa: f64,
    pub b: f64,
    /// `u(κ*, b*) + L V` at the maximizer.
    pub h: f64,
}

/// Box constraints for the control search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlBounds {
    pub kappa_max: f64,
    pub max_leverage: f64,
}

impl ControlBounds {
    pub fn unbounded() -> Self {
        Self {
            kappa_max: f64::INFINITY,
            max_leverage: f64::INFINITY,
        }
    }
}

/// Consumption FOC `∂u/∂κ = V′(1 + ρ̃y)` for fixed labor, clamped to `[α, κ_max]`.
pub(crate) fn consumption_given_labor(y: f64, vp: f64, b: f64, params: &ModelParams, kappa_max: f64) -> f64 {
    let pr = &params.preferences;
    let leisure = ((pr.leisure - b).powf(pr.psi)).powf(1.0 - pr.gamma);
    let unconstrained = (vp * (1.0 + pr.habit_speed * y) / leisure).powf(-1.0 / pr.gamma);
    unconstrained.clamp(pr.alpha, kappa_max.max(pr.alpha))
}

/// Optimal `(κ, b)` for a given marginal value of wealth.
///
/// With `κ(b)` from the consumption FOC, the envelope derivative of the
/// Hamiltonian in `b` is `w V′ + ∂u/∂b(κ(b), b)`, which is decreasing in `b`,
/// so the labor choice is a corner or the unique root.
pub(crate) fn consumption_and_labor(
    y: f64,
    vp: f64,
    params: &ModelParams,
    kappa_max: f64,
) -> Result<(f64, f64)> {
    let bbar = params.labor.max_labor;
    let w = params.labor.wage;
    let slope = |b: f64| {
        let kappa = consumption_given_labor(y, vp, b, params, kappa_max);
        w * vp + marginal_utility_labor_unchecked(kappa, b, &params.preferences)
    };
    let b = if bbar <= 0.0 || w <= 0.0 {
        0.0
    } else if slope(bbar) >= 0.0 {
        bbar
    } else if slope(0.0) <= 0.0 {
        0.0
    } else {
        find_root_bracketed(slope, 0.0, bbar, 1e-13 * bbar.max(1.0))?
    };
    Ok((consumption_given_labor(y, vp, b, params, kappa_max), b))
}

pub(crate) fn hamiltonian_value(
    y: f64,
    vp: f64,
    vpp: f64,
    p: f64,
    kappa: f64,
    b: f64,
    params: &ModelParams,
) -> f64 {
    let (drift, diffusion) = drift_diffusion_y(y, p, kappa, b, params);
    utility_unchecked(kappa, b, &params.preferences) + vp * drift + 0.5 * vpp * diffusion * diffusion
}

/// Outcome of the bounded maximization used inside the solver.
#[derive(Debug, Clone, Copy)]
pub(crate) struct NodeControls {
    pub max: HamiltonianMax,
    pub nonconcave: bool,
}

/// Bounded maximization tolerant of `V″ ≥ 0` and `V′ ≤ 0`.
pub(crate) fn maximize_bounded(
    y: f64,
    vp: f64,
    vpp: f64,
    params: &ModelParams,
    bounds: &ControlBounds,
) -> Result<NodeControls> {
    let m = &params.market;
    let premium = m.mu - m.r;
    let nonconcave = !(vpp < 0.0);
    if !(vp > 0.0) {
        // Wealth carries no marginal value: consume at the cap, do not work, no risk.
        let kappa = bounds.kappa_max.max(params.preferences.alpha);
        let p = 0.0;
        return Ok(NodeControls {
            max: HamiltonianMax {
                p,
                kappa,
                b: 0.0,
                h: hamiltonian_value(y, vp, vpp, p, kappa, 0.0, params),
            },
            nonconcave,
        });
    }
    let p = if nonconcave {
        bounds.max_leverage.copysign(premium)
    } else {
        (-(premium / (m.sigma * m.sigma)) * vp / (y * vpp)).clamp(-bounds.max_leverage, bounds.max_leverage)
    };
    let (kappa, b) = consumption_and_labor(y, vp, params, bounds.kappa_max)?;
    Ok(NodeControls {
        max: HamiltonianMax {
            p,
            kappa,
            b,
            h: hamiltonian_value(y, vp, vpp, p, kappa, b, params),
        },
        nonconcave,
    })
}

/// Pointwise maximization of `u(κ, b) + L V` given `V′` and `V″` at `y`.
///
/// The portfolio is `p* = −((μ−r)/σ²) V′/(y V″)`, consumption solves
/// `∂u/∂κ = V′(1 + ρ̃y)` subject to the habit floor `κ ≥ α`, and labor solves
/// `∂u/∂b = −w V′` or sits at a corner of `[0, b̄]`.
pub fn maximize_hamiltonian(y: f64, vp: f64, vpp: f64, params: &ModelParams) -> Result<HamiltonianMax> {
    if !(y > 0.0) {
        return Err(Error::DomainError(format!("state must be positive, got {y}")));
    }
    if !(vpp < 0.0) {
        return Err(Error::NonConcave { y, vpp });
    }
    if !(vp > 0.0) {
        return Err(Error::DegenerateMarginalValue { y, vp });
    }
    Ok(maximize_bounded(y, vp, vpp, params, &ControlBounds::unbounded())?.max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{marginal_utility_consumption, merton_weight, obstacle};

    #[test]
    fn obstacle_derivatives_give_merton_weight() {
        let params = ModelParams::baseline();
        for y in [0.5, 3.0, 40.0] {
            let o = obstacle(y, &params).unwrap();
            let h = maximize_hamiltonian(y, o.dg, o.d2g, &params).unwrap();
            assert!((h.p - 0.625).abs() < 1e-12, "{}", h.p);
            assert!((h.p - merton_weight(&params)).abs() < 1e-12);
        }
    }

    #[test]
    fn consumption_closed_form_matches_root_finder() {
        let params = ModelParams::baseline();
        let pr = params.preferences;
        for (y, vp, b) in [(1.0, 0.05, 0.3), (10.0, 0.002, 0.0), (0.2, 0.4, 0.8)] {
            let closed = consumption_given_labor(y, vp, b, &params, f64::INFINITY);
            let target = vp * (1.0 + pr.habit_speed * y);
            let foc = |k: f64| marginal_utility_consumption(k, b, &pr).unwrap() - target;
            let root = find_root_bracketed(foc, 1e-3, 1e4, 1e-14).unwrap();
            let expected = root.max(pr.alpha);
            assert!((closed - expected).abs() < 1e-8, "{closed} vs {expected}");
        }
    }

    #[test]
    fn labor_hits_cap_when_marginal_value_is_large() {
        let params = ModelParams::baseline();
        let h = maximize_hamiltonian(1.0, 10.0, -1.0, &params).unwrap();
        assert_eq!(h.b, params.labor.max_labor);
        assert!(h.kappa >= params.preferences.alpha);
    }

    #[test]
    fn interior_labor_satisfies_foc() {
        let params = ModelParams::baseline();
        let vp = 0.02;
        let h = maximize_hamiltonian(5.0, vp, -0.01, &params).unwrap();
        assert!(h.b > 0.0 && h.b < params.labor.max_labor, "{}", h.b);
        let du_db = marginal_utility_labor_unchecked(h.kappa, h.b, &params.preferences);
        assert!((du_db + params.labor.wage * vp).abs() < 1e-9);
    }

    #[test]
    fn maximizer_beats_perturbations() {
        let params = ModelParams::baseline();
        let (y, vp, vpp) = (3.0, 0.03, -0.004);
        let best = maximize_hamiltonian(y, vp, vpp, &params).unwrap();
        for dp in [-0.1, 0.1] {
            for dk in [-0.05, 0.05] {
                for db in [-0.05, 0.05] {
                    let kappa = (best.kappa + dk).max(params.preferences.alpha);
                    let b = (best.b + db).clamp(0.0, params.labor.max_labor);
                    let h = hamiltonian_value(y, vp, vpp, best.p + dp, kappa, b, &params);
                    assert!(h <= best.h + 1e-12);
                }
            }
        }
    }

    #[test]
    fn errors_on_bad_curvature() {
        let params = ModelParams::baseline();
        assert!(matches!(
            maximize_hamiltonian(1.0, 0.1, 0.0, &params),
            Err(Error::NonConcave { .. })
        ));
        assert!(matches!(
            maximize_hamiltonian(1.0, 0.0, -1.0, &params),
            Err(Error::DegenerateMarginalValue { .. })
        ));
    }
}
