//! Mortality laws, survival probabilities, effective discounting and
//! continuous life-annuity pricing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{integrate_semi_infinite_from, QuadratureSpec};

/// Minimum truncation horizon (years) for every pricing integral.
pub const PRICING_HORIZON: f64 = 200.0;

/// Gompertz law `δ_t = (1/λ) exp((n + t − m)/λ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GompertzParams {
    /// Current age `n` (years).
    pub age: f64,
    /// Modal age at death `m` (years).
    pub modal_age: f64,
    /// Dispersion `λ` (years); the aging rate is `1/λ`.
    pub dispersion: f64,
}

impl GompertzParams {
    pub fn new(age: f64, modal_age: f64, dispersion: f64) -> Result<Self> {
        let p = Self {
            age,
            modal_age,
            dispersion,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dispersion > 0.0 && self.dispersion.is_finite()) {
            return Err(Error::ConfigError(format!(
                "Gompertz dispersion must be positive, got {}",
                self.dispersion
            )));
        }
        if !(self.age >= 0.0 && self.age.is_finite()) {
            return Err(Error::ConfigError(format!(
                "age must be non-negative, got {}",
                self.age
            )));
        }
        if !(self.modal_age > 0.0 && self.modal_age.is_finite()) {
            return Err(Error::ConfigError(format!(
                "modal age must be positive, got {}",
                self.modal_age
            )));
        }
        Ok(())
    }

    /// The same law for an agent `years` older.
    pub fn aged(&self, years: f64) -> Self {
        Self {
            age: self.age + years,
            ..*self
        }
    }

    /// `e^{(n−m)/λ}`, the integrated hazard scale.
    fn hazard_scale(&self) -> f64 {
        ((self.age - self.modal_age) / self.dispersion).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MortalityLaw {
    Gompertz(GompertzParams),
    ConstantForce { force: f64 },
}

impl MortalityLaw {
    pub fn validate(&self) -> Result<()> {
        match self {
            MortalityLaw::Gompertz(g) => g.validate(),
            MortalityLaw::ConstantForce { force } => {
                if *force > 0.0 && force.is_finite() {
                    Ok(())
                } else {
                    Err(Error::ConfigError(format!(
                        "constant force of mortality must be positive, got {force}"
                    )))
                }
            }
        }
    }

    /// The law as seen by the agent `years` later.
    pub fn aged(&self, years: f64) -> Self {
        match self {
            MortalityLaw::Gompertz(g) => MortalityLaw::Gompertz(g.aged(years)),
            c @ MortalityLaw::ConstantForce { .. } => *c,
        }
    }

    /// Infimum of the force over `t ≥ 0`.
    pub fn min_force(&self) -> f64 {
        match self {
            MortalityLaw::Gompertz(g) => g.hazard_scale() / g.dispersion,
            MortalityLaw::ConstantForce { force } => *force,
        }
    }
}

fn check_time(t: f64) -> Result<()> {
    if t >= 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::DomainError(format!(
            "time must be non-negative and finite, got {t}"
        )))
    }
}

/// Instantaneous force of mortality `t` years from now.
pub fn force_of_mortality(law: &MortalityLaw, t: f64) -> Result<f64> {
    check_time(t)?;
    Ok(match law {
        MortalityLaw::Gompertz(g) => ((g.age + t - g.modal_age) / g.dispersion).exp() / g.dispersion,
        MortalityLaw::ConstantForce { force } => *force,
    })
}

/// Integrated hazard `∫₀ᵗ δ_u du` in closed form.
pub fn cumulative_hazard(law: &MortalityLaw, t: f64) -> Result<f64> {
    check_time(t)?;
    Ok(match law {
        MortalityLaw::Gompertz(g) => g.hazard_scale() * (t / g.dispersion).exp_m1(),
        MortalityLaw::ConstantForce { force } => force * t,
    })
}

/// Probability of surviving `t` more years.
pub fn survival(law: &MortalityLaw, t: f64) -> Result<f64> {
    Ok((-cumulative_hazard(law, t)?).exp())
}

/// Probability of surviving to `s` given survival to `t`.
pub fn conditional_survival(law: &MortalityLaw, t: f64, s: f64) -> Result<f64> {
    check_time(t)?;
    check_time(s)?;
    if s < t {
        return Err(Error::DomainError(format!(
            "conditional survival needs t <= s, got t = {t}, s = {s}"
        )));
    }
    Ok((cumulative_hazard(law, t)? - cumulative_hazard(law, s)?).exp())
}

/// Subjective discounting combined with mortality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscountSpec {
    /// Subjective time preference `β` (per year).
    pub beta: f64,
    pub law: MortalityLaw,
}

impl DiscountSpec {
    pub fn new(beta: f64, law: MortalityLaw) -> Result<Self> {
        let spec = Self { beta, law };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::ConfigError(format!(
                "subjective discount rate must be positive, got {}",
                self.beta
            )));
        }
        self.law.validate()
    }
}

/// `η_t = β + δ_t`.
pub fn effective_rate(spec: &DiscountSpec, t: f64) -> Result<f64> {
    Ok(spec.beta + force_of_mortality(&spec.law, t)?)
}

/// `ρ_s = ∫₀ˢ (β + δ_u) du`.
pub fn cumulative_discount(spec: &DiscountSpec, s: f64) -> Result<f64> {
    Ok(spec.beta * s + cumulative_hazard(&spec.law, s)?)
}

/// Present value of a continuous life annuity paying one unit per year,
/// discounted at `rate` and weighted by survival from the current age.
fn life_annuity(law: &MortalityLaw, rate: f64) -> Result<f64> {
    law.validate()?;
    let decay = rate + law.min_force();
    if !(decay > 0.0) {
        return Err(Error::NumericalFailure(format!(
            "annuity integral diverges: discount {rate} plus minimum force {} is not positive",
            law.min_force()
        )));
    }
    let spec = QuadratureSpec::with_decay_rate(decay);
    let pv = integrate_semi_infinite_from(
        |s| (-rate * s - cumulative_hazard(law, s).unwrap_or(f64::INFINITY)).exp(),
        &spec,
        PRICING_HORIZON,
    )?;
    if pv > 0.0 && pv.is_finite() {
        Ok(pv)
    } else {
        Err(Error::NumericalFailure(format!(
            "annuity value {pv} is not positive and finite"
        )))
    }
}

/// Annuity factor `ä = ∫₀^∞ e^{−βs} ₛp ds`.
pub fn annuity_factor(spec: &DiscountSpec) -> Result<f64> {
    spec.validate()?;
    life_annuity(&spec.law, spec.beta)
}

/// Actuarially fair annuity rate `k = 1/ä`.
pub fn fair_rate(spec: &DiscountSpec) -> Result<f64> {
    Ok(1.0 / annuity_factor(spec)?)
}

/// Premium of a unit continuous life annuity discounted at the market rate `r`.
pub fn premium(law: &MortalityLaw, r: f64) -> Result<f64> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::ConfigError(format!(
            "premium discount rate must be positive, got {r}"
        )));
    }
    life_annuity(law, r)
}

/// Normalized premium ratio `P(m̃)/P(m_obj)` for subjective versus objective
/// Gompertz beliefs sharing age and dispersion.
pub fn npr(subjective: &GompertzParams, objective: &GompertzParams, r: f64) -> Result<f64> {
    subjective.validate()?;
    objective.validate()?;
    if subjective.age != objective.age || subjective.dispersion != objective.dispersion {
        return Err(Error::ConfigError(format!(
            "subjective and objective laws must share age and dispersion \
             (got n = {} vs {}, λ = {} vs {})",
            subjective.age, objective.age, subjective.dispersion, objective.dispersion
        )));
    }
    let p_sub = premium(&MortalityLaw::Gompertz(*subjective), r)?;
    let p_obj = premium(&MortalityLaw::Gompertz(*objective), r)?;
    Ok(p_sub / p_obj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::integrate;

    fn gompertz(m: f64) -> MortalityLaw {
        MortalityLaw::Gompertz(GompertzParams::new(60.0, m, 10.0).unwrap())
    }

    fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut acc = f(a) + f(b);
        for i in 1..n {
            acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
        }
        acc * h / 3.0
    }

    fn hazard_by_quadrature(law: &MortalityLaw, t: f64, s: f64) -> f64 {
        let spec = QuadratureSpec::default();
        integrate(|u| force_of_mortality(law, u).unwrap(), t, s, &spec).unwrap()
    }

    #[test]
    fn force_examples() {
        let law = gompertz(80.0);
        assert!((force_of_mortality(&law, 20.0).unwrap() - 0.1).abs() < 1e-15);
        let expected = 0.1 * (-2.0f64).exp();
        assert!((force_of_mortality(&law, 0.0).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 0.013534).abs() < 1e-6);
        let c = MortalityLaw::ConstantForce { force: 0.02 };
        assert_eq!(force_of_mortality(&c, 37.0).unwrap(), 0.02);
        assert!(matches!(
            force_of_mortality(&law, -1.0),
            Err(Error::DomainError(_))
        ));
    }

    #[test]
    fn survival_examples() {
        let c = MortalityLaw::ConstantForce { force: 0.02 };
        assert_eq!(survival(&c, 0.0).unwrap(), 1.0);
        assert_eq!(survival(&gompertz(80.0), 0.0).unwrap(), 1.0);
        assert!((survival(&c, 10.0).unwrap() - (-0.2f64).exp()).abs() < 1e-15);
        let law = gompertz(80.0);
        let s20 = survival(&law, 20.0).unwrap();
        let oracle = (-hazard_by_quadrature(&law, 0.0, 20.0)).exp();
        assert!((s20 - oracle).abs() < 1e-12);
        assert!((s20 - 0.4212).abs() < 5e-5, "{s20}");
        assert!(survival(&law, -0.1).is_err());
    }

    #[test]
    fn conditional_survival_examples() {
        let law = gompertz(80.0);
        assert_eq!(conditional_survival(&law, 7.0, 7.0).unwrap(), 1.0);
        let delta = 0.03;
        let c = MortalityLaw::ConstantForce { force: delta };
        let v = conditional_survival(&c, 5.0, 15.0).unwrap();
        assert!((v - (-10.0 * delta).exp()).abs() < 1e-15);
        let v = conditional_survival(&law, 5.0, 10.0).unwrap();
        let ratio = survival(&law, 10.0).unwrap() / survival(&law, 5.0).unwrap();
        let oracle = (-hazard_by_quadrature(&law, 5.0, 10.0)).exp();
        assert!((v - ratio).abs() < 1e-14);
        assert!((v - oracle).abs() < 1e-12);
        assert!(matches!(
            conditional_survival(&law, 10.0, 5.0),
            Err(Error::DomainError(_))
        ));
    }

    #[test]
    fn discount_examples() {
        let c = DiscountSpec::new(0.03, MortalityLaw::ConstantForce { force: 0.02 }).unwrap();
        assert!((effective_rate(&c, 12.0).unwrap() - 0.05).abs() < 1e-15);
        assert!((cumulative_discount(&c, 10.0).unwrap() - 0.5).abs() < 1e-15);
        let g = DiscountSpec::new(0.03, gompertz(80.0)).unwrap();
        assert!((effective_rate(&g, 20.0).unwrap() - 0.13).abs() < 1e-15);
        assert_eq!(cumulative_discount(&g, 0.0).unwrap(), 0.0);
        assert!(effective_rate(&g, -2.0).is_err());
    }

    #[test]
    fn cumulative_discount_is_increasing_and_convex() {
        let g = DiscountSpec::new(0.03, gompertz(80.0)).unwrap();
        let vals: Vec<f64> = (0..100)
            .map(|i| cumulative_discount(&g, i as f64 * 0.5).unwrap())
            .collect();
        for w in vals.windows(3) {
            assert!(w[1] > w[0]);
            assert!(w[2] - 2.0 * w[1] + w[0] > 0.0);
        }
    }

    #[test]
    fn constant_force_annuity() {
        let spec = DiscountSpec::new(0.03, MortalityLaw::ConstantForce { force: 0.02 }).unwrap();
        assert!((annuity_factor(&spec).unwrap() - 20.0).abs() < 1e-9);
        assert!((fair_rate(&spec).unwrap() - 0.05).abs() < 1e-12);
        let spec = DiscountSpec::new(0.03, MortalityLaw::ConstantForce { force: 0.07 }).unwrap();
        assert!((annuity_factor(&spec).unwrap() - 10.0).abs() < 1e-9);
        assert!((fair_rate(&spec).unwrap() - 0.10).abs() < 1e-12);
    }

    #[test]
    fn gompertz_annuity_matches_simpson_oracle() {
        let law = gompertz(80.0);
        let spec = DiscountSpec::new(0.03, law).unwrap();
        let oracle = simpson(
            |s| (-0.03 * s).exp() * survival(&law, s).unwrap(),
            0.0,
            200.0,
            200_000,
        );
        let a = annuity_factor(&spec).unwrap();
        assert!(((a - oracle) / oracle).abs() < 1e-6, "{a} vs {oracle}");
        let k = fair_rate(&spec).unwrap();
        assert!(k > spec.beta);
    }

    #[test]
    fn npr_against_simpson_oracle() {
        let obj = GompertzParams::new(60.0, 80.0, 10.0).unwrap();
        let premium_oracle = |m: f64| {
            let law = gompertz(m);
            simpson(
                |t| (-0.02 * t).exp() * survival(&law, t).unwrap(),
                0.0,
                200.0,
                200_000,
            )
        };
        assert_eq!(npr(&obj, &obj, 0.02).unwrap(), 1.0);
        for m in [60.0, 65.0, 70.0, 75.0] {
            let sub = GompertzParams::new(60.0, m, 10.0).unwrap();
            let v = npr(&sub, &obj, 0.02).unwrap();
            let oracle = premium_oracle(m) / premium_oracle(80.0);
            assert!((v - oracle).abs() < 1e-9, "m = {m}: {v} vs {oracle}");
        }
    }

    #[test]
    fn npr_rejects_mismatched_laws() {
        let obj = GompertzParams::new(60.0, 80.0, 10.0).unwrap();
        let other_age = GompertzParams::new(61.0, 70.0, 10.0).unwrap();
        let other_disp = GompertzParams::new(60.0, 70.0, 9.0).unwrap();
        assert!(matches!(npr(&other_age, &obj, 0.02), Err(Error::ConfigError(_))));
        assert!(matches!(npr(&other_disp, &obj, 0.02), Err(Error::ConfigError(_))));
    }

    #[test]
    fn npr_increases_with_subjective_modal_age() {
        let obj = GompertzParams::new(60.0, 80.0, 10.0).unwrap();
        let mut prev = 0.0;
        for m in [55.0, 60.0, 65.0, 70.0, 75.0, 80.0] {
            let v = npr(&GompertzParams::new(60.0, m, 10.0).unwrap(), &obj, 0.02).unwrap();
            assert!(v > prev && v <= 1.0);
            prev = v;
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn survival_monotone_and_multiplicative(
                m in 60.0f64..95.0,
                t in 0.0f64..40.0,
                dt in 0.0f64..30.0,
            ) {
                let law = gompertz(m);
                let s = t + dt;
                let st = survival(&law, t).unwrap();
                let ss = survival(&law, s).unwrap();
                prop_assert!(ss <= st);
                prop_assert!(st > 0.0 && st <= 1.0);
                let cond = conditional_survival(&law, t, s).unwrap();
                prop_assert!((ss - st * cond).abs() < 1e-12);
                // higher modal age never lowers survival
                let higher = survival(&gompertz(m + 1.0), t).unwrap();
                prop_assert!(higher >= st);
            }

            #[test]
            fn closed_form_matches_quadrature(m in 60.0f64..95.0, t in 0.0f64..60.0) {
                let law = gompertz(m);
                let oracle = (-hazard_by_quadrature(&law, 0.0, t)).exp();
                prop_assert!((survival(&law, t).unwrap() - oracle).abs() < 1e-10);
            }

            #[test]
            fn constant_fair_rate_is_beta_plus_delta(beta in 0.005f64..0.1, delta in 0.005f64..0.2) {
                let spec = DiscountSpec::new(beta, MortalityLaw::ConstantForce { force: delta }).unwrap();
                prop_assert!((fair_rate(&spec).unwrap() - (beta + delta)).abs() < 1e-10);
            }
        }
    }
}
