//! Model parameters, utility, the wealth-to-habit dynamics and the
//! annuitization payoff.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mortality::{self, DiscountSpec, GompertzParams, MortalityLaw};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketParams {
    /// Risk-free rate `r`.
    pub r: f64,
    /// Expected return of the risky asset `μ`.
    pub mu: f64,
    /// Volatility `σ`.
    pub sigma: f64,
}

impl MarketParams {
    /// Market price of risk `θ = (μ − r)/σ`.
    pub fn sharpe(&self) -> f64 {
        (self.mu - self.r) / self.sigma
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreferenceParams {
    /// Subjective discount rate `β`.
    pub beta: f64,
    /// Relative risk aversion `γ` (positive, not one).
    pub gamma: f64,
    /// Leisure weight `ψ`.
    pub psi: f64,
    /// Leisure endowment `l̄`.
    pub leisure: f64,
    /// Habit addictiveness `α ∈ (0, 1]`: consumption never falls below `αZ`.
    pub alpha: f64,
    /// Habit adjustment speed `ρ̃`.
    pub habit_speed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaborParams {
    /// Wage per unit of labor and habit.
    pub wage: f64,
    /// Labor cap `b̄`.
    pub max_labor: f64,
}

/// Full parameter set for one stationary solve at a fixed age.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub market: MarketParams,
    pub preferences: PreferenceParams,
    pub labor: LaborParams,
    /// Annuity payout rate `k`.
    pub annuity_rate: f64,
    /// Effective discount rate `η = β + δ` at the evaluation age.
    pub effective_rate: f64,
}

impl MarketParams {
    pub fn baseline() -> Self {
        Self {
            r: 0.02,
            mu: 0.07,
            sigma: 0.2,
        }
    }
}

impl PreferenceParams {
    pub fn baseline() -> Self {
        Self {
            beta: 0.03,
            gamma: 2.0,
            psi: 0.5,
            leisure: 1.0,
            alpha: 0.9,
            habit_speed: 0.1,
        }
    }
}

impl LaborParams {
    pub fn baseline() -> Self {
        Self {
            wage: 10.0,
            max_labor: 0.8,
        }
    }
}

/// Default mortality: a 60-year-old under Gompertz with modal age 80 and dispersion 10.
pub fn default_gompertz() -> GompertzParams {
    GompertzParams {
        age: 60.0,
        modal_age: 80.0,
        dispersion: 10.0,
    }
}

impl ModelParams {
    /// Assemble parameters with `η` taken from `law` at its current age and `k`
    /// either given or set to the fair rate `1/ä`.
    pub fn with_mortality(
        market: MarketParams,
        preferences: PreferenceParams,
        labor: LaborParams,
        law: &MortalityLaw,
        annuity_rate: Option<f64>,
    ) -> Result<Self> {
        let discount = DiscountSpec::new(preferences.beta, *law)?;
        let effective_rate = mortality::effective_rate(&discount, 0.0)?;
        let annuity_rate = match annuity_rate {
            Some(k) => k,
            None => mortality::fair_rate(&discount)?,
        };
        Ok(Self {
            market,
            preferences,
            labor,
            annuity_rate,
            effective_rate,
        })
    }

    /// The parameter set used for the baseline numerical experiments.
    pub fn baseline() -> Self {
        Self::with_mortality(
            MarketParams::baseline(),
            PreferenceParams::baseline(),
            LaborParams::baseline(),
            &MortalityLaw::Gompertz(default_gompertz()),
            None,
        )
        .expect("default parameters are valid")
    }

    pub fn validate(&self) -> Vec<Violation> {
        validate(self)
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let violations = self.validate();
        if violations.is_empty() {
            Ok(())
        } else {
            let list: Vec<String> = violations.iter().map(ToString::to_string).collect();
            Err(Error::ConfigError(list.join("; ")))
        }
    }
}

/// A named parameter invariant that does not hold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub name: &'static str,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.name, self.detail)
    }
}

/// Check every parameter invariant and report all that fail.
pub fn validate(params: &ModelParams) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut check = |ok: bool, name: &'static str, detail: String| {
        if !ok {
            out.push(Violation { name, detail });
        }
    };
    let m = &params.market;
    let p = &params.preferences;
    let l = &params.labor;
    let all_finite = [
        m.r,
        m.mu,
        m.sigma,
        p.beta,
        p.gamma,
        p.psi,
        p.leisure,
        p.alpha,
        p.habit_speed,
        l.wage,
        l.max_labor,
        params.annuity_rate,
        params.effective_rate,
    ]
    .iter()
    .all(|v| v.is_finite());
    check(all_finite, "finite", "all parameters must be finite".into());
    check(m.r > 0.0, "rate positive", format!("r = {} must be > 0", m.r));
    check(
        m.sigma > 0.0,
        "volatility positive",
        format!("sigma = {} must be > 0", m.sigma),
    );
    check(
        p.beta > 0.0,
        "discount positive",
        format!("beta = {} must be > 0", p.beta),
    );
    check(
        p.gamma > 0.0 && p.gamma != 1.0,
        "risk aversion",
        format!("gamma = {} must be > 0 and != 1", p.gamma),
    );
    check(
        p.psi > 0.0,
        "leisure weight",
        format!("psi = {} must be > 0", p.psi),
    );
    check(
        p.alpha > 0.0 && p.alpha <= 1.0,
        "addictiveness",
        format!("alpha = {} must lie in (0, 1]", p.alpha),
    );
    check(
        p.habit_speed > 0.0,
        "habit speed",
        format!("habit_speed = {} must be > 0", p.habit_speed),
    );
    let floor_cost = p.habit_speed * (1.0 - p.alpha);
    check(
        m.r > floor_cost,
        "viability",
        format!("r = {} must exceed habit_speed*(1-alpha) = {floor_cost}", m.r),
    );
    check(l.wage >= 0.0, "wage", format!("wage = {} must be >= 0", l.wage));
    check(
        l.max_labor >= 0.0 && l.max_labor < p.leisure,
        "labor cap",
        format!(
            "max_labor = {} must lie in [0, leisure = {})",
            l.max_labor, p.leisure
        ),
    );
    check(
        params.annuity_rate > m.r,
        "annuity rate",
        format!("k = {} must exceed r = {}", params.annuity_rate, m.r),
    );
    check(
        params.effective_rate > p.beta,
        "effective rate",
        format!("eta = {} must exceed beta = {}", params.effective_rate, p.beta),
    );
    out
}

/// `x^e` for `x > 0`, skipping the general `pow` when `e` is an integer or
/// half-integer (the common parameterizations); the Monte Carlo loop spends
/// most of its time here otherwise.
#[inline]
pub(crate) fn pow_pos(x: f64, e: f64) -> f64 {
    // Integer casts rather than `fract`/`floor`, which are library calls on
    // baseline x86-64; the small cases avoid the `powi` loop too.
    let twice = 2.0 * e;
    let halves = twice as i32;
    if e.abs() <= 32.0 && f64::from(halves) == twice {
        return match halves {
            -4 => 1.0 / (x * x),
            -3 => 1.0 / (x * x.sqrt()),
            -2 => 1.0 / x,
            -1 => 1.0 / x.sqrt(),
            0 => 1.0,
            1 => x.sqrt(),
            2 => x,
            3 => x * x.sqrt(),
            4 => x * x,
            h if h % 2 == 0 => x.powi(h / 2),
            h => x.powi(h.div_euclid(2)) * x.sqrt(),
        };
    }
    x.powf(e)
}

fn leisure_factor(b: f64, prefs: &PreferenceParams) -> f64 {
    pow_pos(prefs.leisure - b, prefs.psi * (1.0 - prefs.gamma))
}

fn check_utility_domain(kappa: f64, b: f64, prefs: &PreferenceParams) -> Result<()> {
    if !(kappa > 0.0) {
        return Err(Error::DomainError(format!(
            "consumption ratio must be positive, got {kappa}"
        )));
    }
    if !(b >= 0.0 && b < prefs.leisure) {
        return Err(Error::DomainError(format!(
            "labor must lie in [0, {}), got {b}",
            prefs.leisure
        )));
    }
    Ok(())
}

/// `u(κ, b) = (κ (l̄ − b)^ψ)^{1−γ} / (1−γ)`.
pub fn utility(kappa: f64, b: f64, prefs: &PreferenceParams) -> Result<f64> {
    check_utility_domain(kappa, b, prefs)?;
    Ok(utility_unchecked(kappa, b, prefs))
}

pub(crate) fn utility_unchecked(kappa: f64, b: f64, prefs: &PreferenceParams) -> f64 {
    let g = 1.0 - prefs.gamma;
    pow_pos(kappa, g) * leisure_factor(b, prefs) / g
}

/// `∂u/∂κ = κ^{−γ} ((l̄ − b)^ψ)^{1−γ}`.
pub fn marginal_utility_consumption(kappa: f64, b: f64, prefs: &PreferenceParams) -> Result<f64> {
    check_utility_domain(kappa, b, prefs)?;
    Ok(pow_pos(kappa, -prefs.gamma) * leisure_factor(b, prefs))
}

/// `∂u/∂b = −ψ κ^{1−γ} (l̄ − b)^{ψ(1−γ)−1}`.
pub fn marginal_utility_labor(kappa: f64, b: f64, prefs: &PreferenceParams) -> Result<f64> {
    check_utility_domain(kappa, b, prefs)?;
    Ok(marginal_utility_labor_unchecked(kappa, b, prefs))
}

pub(crate) fn marginal_utility_labor_unchecked(kappa: f64, b: f64, prefs: &PreferenceParams) -> f64 {
    -prefs.psi
        * pow_pos(kappa, 1.0 - prefs.gamma)
        * pow_pos(prefs.leisure - b, prefs.psi * (1.0 - prefs.gamma) - 1.0)
}

/// Drift and diffusion of `dy` under controls `(p, κ, b)`.
pub fn drift_diffusion_y(y: f64, p: f64, kappa: f64, b: f64, params: &ModelParams) -> (f64, f64) {
    let m = &params.market;
    let rho = params.preferences.habit_speed;
    let drift = (m.r + rho) * y + p * y * (m.mu - m.r) - kappa * (1.0 + rho * y) + params.labor.wage * b;
    (drift, m.sigma * p * y)
}

/// Annuitization payoff and its first two derivatives at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObstacleValue {
    pub g: f64,
    pub dg: f64,
    pub d2g: f64,
}

/// `G(y) = (k y)^{1−γ} / (η (1−γ))` with `G′` and `G″`.
pub fn obstacle(y: f64, params: &ModelParams) -> Result<ObstacleValue> {
    if !(y > 0.0) {
        return Err(Error::DomainError(format!(
            "annuitization value needs y > 0, got {y}"
        )));
    }
    Ok(obstacle_unchecked(y, params))
}

pub(crate) fn obstacle_unchecked(y: f64, params: &ModelParams) -> ObstacleValue {
    let gamma = params.preferences.gamma;
    let k = params.annuity_rate;
    let eta = params.effective_rate;
    let dg = k.powf(1.0 - gamma) * y.powf(-gamma) / eta;
    ObstacleValue {
        g: (k * y).powf(1.0 - gamma) / (eta * (1.0 - gamma)),
        dg,
        d2g: -gamma * dg / y,
    }
}

/// Constant Merton weight `(μ − r)/(σ² γ)`.
pub fn merton_weight(params: &ModelParams) -> f64 {
    let m = &params.market;
    m.sharpe() / (m.sigma * params.preferences.gamma)
}
