//! Monte Carlo evaluation of a policy table.
//!
//! Each path steps the wealth-to-habit ratio `dy = d(y) dt + s(y) dW` with
//!
//! ```text
//! d(y) = (r + ρ̃) y + p y (μ − r) − κ (1 + ρ̃ y) + w b,   s(y) = σ p y
//! Z ← Z (1 + ρ̃ (κ − 1) Δt)
//! ```
//!
//! accumulating `exp(−ρ_t) u(κ, b) Δt` until the first step with `y ≥ y*`,
//! where it collects `exp(−ρ_τ) G(y_τ)` and stops. Paths whose ratio reaches
//! zero are terminated, counted as solvency violations, and credited with the
//! discounted value of consuming the habit floor for life.
//!
//! The step is Euler–Maruyama either on `ln y` ([`Scheme::LogEuler`], the
//! default) or on `y` itself ([`Scheme::Euler`]). Optimal policies carry large
//! risky weights at small ratios, where plain Euler steps overshoot below zero
//! far more often than the continuous dynamics ever reach it; the log form
//! keeps the ratio positive and agrees with plain Euler to `O(Δt)`.
//!
//! Path `i` draws its normals from ChaCha8 stream `i` under the configured
//! seed, so results do not depend on how paths are scheduled across threads,
//! and two policies simulated with the same configuration see the same noise.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{drift_diffusion_y, obstacle_unchecked, utility_unchecked, ModelParams};
use crate::mortality::{annuity_factor, cumulative_discount, DiscountSpec};
use crate::policy::PolicyTable;

/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959963984540054;

/// Quantile levels reported for the stopping time.
pub const TAU_QUANTILES: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// `ln y ← ln y + (d/y − ½ (s/y)²) Δt + (s/y) √Δt ξ`.
    #[default]
    LogEuler,
    /// `y ← y + d Δt + s √Δt ξ`.
    Euler,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub paths: usize,
    /// Time step in years.
    pub dt: f64,
    /// Paths still running after this many years are cut off.
    pub horizon: f64,
    pub seed: u64,
    pub y0: f64,
    pub z0: f64,
    pub scheme: Scheme,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            paths: 20_000,
            dt: 1.0 / 250.0,
            horizon: 200.0,
            seed: 20_240_601,
            y0: 1.0,
            z0: 1.0,
            scheme: Scheme::LogEuler,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::ConfigError(msg));
        if self.paths == 0 {
            return bad("simulation needs at least one path".into());
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("time step must be positive, got {}", self.dt));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad(format!("horizon must be positive, got {}", self.horizon));
        }
        if !(self.y0 > 0.0 && self.y0.is_finite()) {
            return bad(format!("initial ratio must be positive, got {}", self.y0));
        }
        if !(self.z0 > 0.0 && self.z0.is_finite()) {
            return bad(format!("initial habit must be positive, got {}", self.z0));
        }
        Ok(())
    }

    fn steps(&self) -> usize {
        (self.horizon / self.dt).ceil() as usize
    }
}

/// What happened on one path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathOutcome {
    /// Discounted running utility plus the discounted annuitization value.
    pub utility: f64,
    /// Annuitization time, if the path reached `y*`.
    pub tau: Option<f64>,
    /// The ratio reached zero.
    pub insolvent: bool,
    pub final_t: f64,
    pub final_y: f64,
    pub final_z: f64,
}

/// Summary of a batch of paths.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathStats {
    pub paths: usize,
    pub seed: u64,
    pub mean_utility: f64,
    /// Half-width of the 95% normal confidence interval for the mean.
    pub ci_half_width: f64,
    /// `(level, τ)` over the paths that annuitized; empty if none did.
    pub tau_quantiles: Vec<(f64, f64)>,
    pub fraction_never_stopped: f64,
    pub solvency_violation_fraction: f64,
    /// Mean wealth `X = y Z` at annuitization.
    pub mean_wealth_at_stop: Option<f64>,
}

/// Mean and 95% half-width of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub ci_half_width: f64,
}

/// Paired comparison of two policies on common noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Comparison {
    pub paths: usize,
    /// Mean of `utility_a − utility_b` across paths.
    pub mean_difference: f64,
    pub ci_half_width: f64,
    pub a: Estimate,
    pub b: Estimate,
}

/// One Euler step as seen by a trace observer.
#[derive(Debug, Clone, Copy)]
struct Step {
    t: f64,
    y: f64,
    z: f64,
    kappa: f64,
    b: f64,
    p: f64,
    stopped: bool,
}

/// `exp(−ρ_{n Δt})` for every step index, shared by all paths.
fn discount_table(mortality: &DiscountSpec, config: &SimConfig) -> Result<Vec<f64>> {
    (0..=config.steps())
        .map(|n| Ok((-cumulative_discount(mortality, n as f64 * config.dt)?).exp()))
        .collect()
}

/// Continuation credited to a path that runs out of wealth at time `t`:
/// the habit floor `α` consumed without labor for the rest of life, as if
/// funded. It overstates what a broke agent can secure, so comparisons
/// against a policy that goes broke more often stay conservative.
fn insolvency_value(mortality: &DiscountSpec, t: f64, params: &ModelParams) -> Result<f64> {
    let aged = DiscountSpec::new(mortality.beta, mortality.law.aged(t))?;
    Ok(utility_unchecked(params.preferences.alpha, 0.0, &params.preferences) * annuity_factor(&aged)?)
}

/// The policy's interpolant stored one interval per record with its slopes
/// precomputed, so a lookup near the previous one needs no division. Matches
/// [`PolicyTable::evaluate`] on `[y_0, y_{n−1})` up to rounding.
struct Segments {
    left: Vec<f64>,
    right_end: f64,
    /// `(ln y_0, 1/ln(y_{i+1}/y_i))` when the nodes are geometric, which
    /// turns the interval search into arithmetic. Large risky positions at
    /// small ratios move `y` across many nodes per step, so walking from
    /// the previous interval rarely suffices.
    geometric: Option<(f64, f64)>,
    /// `[κ, κ′, b, b′, p, p′]` at each left endpoint.
    coef: Vec<[f64; 6]>,
}

impl Segments {
    fn new(table: &PolicyTable) -> Self {
        let n = table.y.len();
        let coef = (0..n - 1)
            .map(|i| {
                let h = table.y[i + 1] - table.y[i];
                let hold = table.region[i] != table.region[i + 1];
                let slope = |v: &[f64]| if hold { 0.0 } else { (v[i + 1] - v[i]) / h };
                [
                    table.kappa[i],
                    slope(&table.kappa),
                    table.b[i],
                    slope(&table.b),
                    table.p[i],
                    slope(&table.p),
                ]
            })
            .collect();
        let ratio = (table.y[n - 1] / table.y[0]).ln() / (n - 1) as f64;
        let geometric = table
            .y
            .iter()
            .enumerate()
            .all(|(i, &y)| ((y / table.y[0]).ln() - i as f64 * ratio).abs() <= 1e-9 * ratio)
            .then(|| (table.y[0].ln(), 1.0 / ratio));
        Self {
            left: table.y[..n - 1].to_vec(),
            right_end: table.y[n - 1],
            geometric,
            coef,
        }
    }

    /// `(κ, b, p)` at `y`, or `None` outside the tabulated range.
    #[inline]
    fn controls(&self, y: f64, hint: &mut usize) -> Option<(f64, f64, f64)> {
        const MAX_WALK: usize = 8;
        let left = &self.left;
        if !(y >= left[0] && y < self.right_end) {
            return None;
        }
        let last = left.len() - 1;
        let mut i = match self.geometric {
            Some((ln_y0, inv_ratio)) => (((y.ln() - ln_y0) * inv_ratio) as usize).min(last),
            None => (*hint).min(last),
        };
        let mut walked = 0;
        while walked < MAX_WALK && y < left[i] {
            i -= 1;
            walked += 1;
        }
        while walked < MAX_WALK && i < last && y >= left[i + 1] {
            i += 1;
            walked += 1;
        }
        if !(y >= left[i] && (i == last || y < left[i + 1])) {
            i = left.partition_point(|&v| v <= y) - 1;
        }
        *hint = i;
        let d = y - left[i];
        let c = &self.coef[i];
        Some((c[0] + d * c[1], c[2] + d * c[3], c[4] + d * c[5]))
    }
}

/// Inputs shared by every path of a run.
struct Stepper<'a> {
    policy: &'a PolicyTable,
    mortality: &'a DiscountSpec,
    discounts: &'a [f64],
    config: &'a SimConfig,
    segments: Segments,
    sqrt_dt: f64,
    y_star: f64,
    steps: usize,
}

/// One path between steps.
struct Walker {
    rng: ChaCha8Rng,
    n: usize,
    y: f64,
    z: f64,
    total: f64,
    hint: usize,
}

impl<'a> Stepper<'a> {
    fn new(
        policy: &'a PolicyTable,
        mortality: &'a DiscountSpec,
        discounts: &'a [f64],
        config: &'a SimConfig,
    ) -> Self {
        Self {
            policy,
            mortality,
            discounts,
            config,
            segments: Segments::new(policy),
            sqrt_dt: config.dt.sqrt(),
            y_star: policy.y_star.unwrap_or(f64::INFINITY),
            steps: config.steps(),
        }
    }

    fn start(&self, index: u64) -> Walker {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(index);
        Walker {
            rng,
            n: 0,
            y: self.config.y0,
            z: self.config.z0,
            total: 0.0,
            hint: 0,
        }
    }

    fn finish(&self, w: &Walker, tau: Option<f64>, insolvent: bool) -> PathOutcome {
        PathOutcome {
            utility: w.total,
            tau,
            insolvent,
            final_t: w.n as f64 * self.config.dt,
            final_y: w.y,
            final_z: w.z,
        }
    }

    /// Advance `w` by one step, or end it; `Some` once the path is over.
    fn advance<F: FnMut(&Step)>(&self, w: &mut Walker, observe: &mut F) -> Result<Option<PathOutcome>> {
        let params = &self.policy.params;
        let dt = self.config.dt;
        if w.n == self.steps {
            return Ok(Some(self.finish(w, None, false)));
        }
        let t = w.n as f64 * dt;
        let discount = self.discounts[w.n];
        if w.y >= self.y_star {
            let point = self.policy.evaluate(w.y)?;
            observe(&Step {
                t,
                y: w.y,
                z: w.z,
                kappa: point.kappa,
                b: point.b,
                p: point.p,
                stopped: true,
            });
            w.total += discount * obstacle_unchecked(w.y, params).g;
            return Ok(Some(self.finish(w, Some(t), false)));
        }
        let (kappa, b, p) = match self.segments.controls(w.y, &mut w.hint) {
            Some(c) => c,
            None => {
                let c = self.policy.evaluate(w.y)?;
                (c.kappa, c.b, c.p)
            }
        };
        observe(&Step {
            t,
            y: w.y,
            z: w.z,
            kappa,
            b,
            p,
            stopped: false,
        });
        w.total += discount * utility_unchecked(kappa, b, &params.preferences) * dt;
        let (drift, diffusion) = drift_diffusion_y(w.y, p, kappa, b, params);
        let xi: f64 = StandardNormal.sample(&mut w.rng);
        match self.config.scheme {
            Scheme::Euler => w.y += drift * dt + diffusion * self.sqrt_dt * xi,
            Scheme::LogEuler => {
                // The log-volatility s/y is σp; only the drift needs dividing.
                let (a, v) = (drift / w.y, params.market.sigma * p);
                w.y *= ((a - 0.5 * v * v) * dt + v * self.sqrt_dt * xi).exp();
            }
        }
        w.z *= 1.0 + params.preferences.habit_speed * (kappa - 1.0) * dt;
        w.n += 1;
        if w.y <= 0.0 {
            let t = w.n as f64 * dt;
            w.total += self.discounts[w.n] * insolvency_value(self.mortality, t, params)?;
            return Ok(Some(self.finish(w, None, true)));
        }
        Ok(None)
    }

    fn run<F: FnMut(&Step)>(&self, index: u64, mut observe: F) -> Result<PathOutcome> {
        let mut w = self.start(index);
        loop {
            if let Some(out) = self.advance(&mut w, &mut observe)? {
                return Ok(out);
            }
        }
    }

    /// Paths `indices` stepped in lockstep. Each step is a serial chain of
    /// divisions, an `exp` and a table lookup; interleaving independent
    /// paths lets those chains overlap. Every path still draws only from its
    /// own stream, so outcomes match [`run`](Self::run) exactly.
    fn run_batch(&self, indices: std::ops::Range<u64>) -> Result<Vec<PathOutcome>> {
        let mut walkers: Vec<Walker> = indices.map(|i| self.start(i)).collect();
        let mut done: Vec<Option<PathOutcome>> = vec![None; walkers.len()];
        let mut active: Vec<usize> = (0..walkers.len()).collect();
        let mut failure = None;
        while !active.is_empty() {
            active.retain(|&k| match self.advance(&mut walkers[k], &mut |_| {}) {
                Ok(None) => true,
                Ok(Some(out)) => {
                    done[k] = Some(out);
                    false
                }
                Err(e) => {
                    failure.get_or_insert(e);
                    false
                }
            });
            if let Some(e) = failure {
                return Err(e);
            }
        }
        Ok(done
            .into_iter()
            .map(|o| o.expect("every path finishes"))
            .collect())
    }
}

/// Paths per lockstep batch.
const BATCH: u64 = 8;

/// Simulate path number `index` alone.
pub fn simulate_path(
    policy: &PolicyTable,
    mortality: &DiscountSpec,
    config: &SimConfig,
    index: u64,
) -> Result<PathOutcome> {
    config.validate()?;
    mortality.validate()?;
    let discounts = discount_table(mortality, config)?;
    Stepper::new(policy, mortality, &discounts, config).run(index, |_| {})
}

fn outcomes(policy: &PolicyTable, mortality: &DiscountSpec, config: &SimConfig) -> Result<Vec<PathOutcome>> {
    config.validate()?;
    mortality.validate()?;
    let discounts = discount_table(mortality, config)?;
    let stepper = Stepper::new(policy, mortality, &discounts, config);
    let paths = config.paths as u64;
    let batches: Vec<Vec<PathOutcome>> = (0..paths.div_ceil(BATCH))
        .into_par_iter()
        .map(|k| stepper.run_batch(k * BATCH..((k + 1) * BATCH).min(paths)))
        .collect::<Result<_>>()?;
    Ok(batches.into_iter().flatten().collect())
}

/// Compensated (Neumaier) sum in slice order.
fn neumaier_sum(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Sample mean and 95% half-width, computed around the first observation so
/// that a constant sample gives exactly that constant and a zero half-width.
fn estimate(values: &[f64]) -> Estimate {
    let n = values.len();
    let shift = values[0];
    let mean_dev = neumaier_sum(values.iter().map(|v| v - shift)) / n as f64;
    let mean = shift + mean_dev;
    if n < 2 {
        return Estimate {
            mean,
            ci_half_width: f64::INFINITY,
        };
    }
    let ss = neumaier_sum(values.iter().map(|v| {
        let d = v - shift - mean_dev;
        d * d
    }));
    let sd = (ss / (n - 1) as f64).sqrt();
    Estimate {
        mean,
        ci_half_width: Z95 * sd / (n as f64).sqrt(),
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

/// Simulate `config.paths` paths under `policy`.
pub fn simulate(policy: &PolicyTable, mortality: &DiscountSpec, config: &SimConfig) -> Result<PathStats> {
    let out = outcomes(policy, mortality, config)?;
    let utilities: Vec<f64> = out.iter().map(|o| o.utility).collect();
    let est = estimate(&utilities);
    let mut taus: Vec<f64> = out.iter().filter_map(|o| o.tau).collect();
    taus.sort_by(f64::total_cmp);
    let n = out.len() as f64;
    let stopped_wealth: Vec<f64> = out
        .iter()
        .filter(|o| o.tau.is_some())
        .map(|o| o.final_y * o.final_z)
        .collect();
    Ok(PathStats {
        paths: out.len(),
        seed: config.seed,
        mean_utility: est.mean,
        ci_half_width: est.ci_half_width,
        tau_quantiles: if taus.is_empty() {
            Vec::new()
        } else {
            TAU_QUANTILES.iter().map(|&q| (q, quantile(&taus, q))).collect()
        },
        fraction_never_stopped: out.iter().filter(|o| o.tau.is_none()).count() as f64 / n,
        solvency_violation_fraction: out.iter().filter(|o| o.insolvent).count() as f64 / n,
        mean_wealth_at_stop: if stopped_wealth.is_empty() {
            None
        } else {
            Some(neumaier_sum(stopped_wealth.iter().copied()) / stopped_wealth.len() as f64)
        },
    })
}

/// Mean realized discounted utility with its 95% confidence interval.
pub fn estimate_objective(
    policy: &PolicyTable,
    mortality: &DiscountSpec,
    config: &SimConfig,
) -> Result<Estimate> {
    let out = outcomes(policy, mortality, config)?;
    let utilities: Vec<f64> = out.iter().map(|o| o.utility).collect();
    Ok(estimate(&utilities))
}

/// Paired comparison of `a` against `b` with common random numbers.
pub fn compare(
    a: &PolicyTable,
    b: &PolicyTable,
    mortality: &DiscountSpec,
    config: &SimConfig,
) -> Result<Comparison> {
    let pa = &a.params;
    let pb = &b.params;
    if pa.market != pb.market || pa.preferences != pb.preferences {
        return Err(Error::ConfigError(
            "compared policies must share market and preference parameters".into(),
        ));
    }
    let ua: Vec<f64> = outcomes(a, mortality, config)?
        .iter()
        .map(|o| o.utility)
        .collect();
    let ub: Vec<f64> = outcomes(b, mortality, config)?
        .iter()
        .map(|o| o.utility)
        .collect();
    let diff: Vec<f64> = ua.iter().zip(&ub).map(|(x, y)| x - y).collect();
    let d = estimate(&diff);
    Ok(Comparison {
        paths: diff.len(),
        mean_difference: d.mean,
        ci_half_width: d.ci_half_width,
        a: estimate(&ua),
        b: estimate(&ub),
    })
}

/// Write per-step rows `path,t,y,Z,kappa,b,p,stopped` for the first
/// `max_paths` paths.
pub fn write_trace<W: Write>(
    policy: &PolicyTable,
    mortality: &DiscountSpec,
    config: &SimConfig,
    max_paths: usize,
    mut out: W,
) -> Result<()> {
    config.validate()?;
    mortality.validate()?;
    let discounts = discount_table(mortality, config)?;
    let stepper = Stepper::new(policy, mortality, &discounts, config);
    writeln!(out, "path,t,y,Z,kappa,b,p,stopped")?;
    for i in 0..max_paths.min(config.paths) as u64 {
        let mut io_err = None;
        stepper.run(i, |s| {
            if io_err.is_none() {
                if let Err(e) = writeln!(
                    out,
                    "{i},{},{},{},{},{},{},{}",
                    s.t,
                    s.y,
                    s.z,
                    s.kappa,
                    s.b,
                    s.p,
                    u8::from(s.stopped)
                ) {
                    io_err = Some(e);
                }
            }
        })?;
        if let Some(e) = io_err {
            return Err(e.into());
        }
    }
    Ok(())
}
