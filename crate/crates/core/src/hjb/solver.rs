use rayon::prelude::*;

use super::boundary::{boundary_diagnostics, extract_thresholds};
use super::hamiltonian::{consumption_and_labor, maximize_bounded, ControlBounds};
use super::{Grid, ObstacleMode, Region, SolveDiagnostics, SolveResult, SolverConfig, Upwind};
use crate::error::{Error, Result};
use crate::model::{drift_diffusion_y, merton_weight, obstacle_unchecked, utility_unchecked, ModelParams};

/// Controls at one node as used by the linear solve.
#[derive(Debug, Clone, Copy)]
struct Control {
    p: f64,
    kappa: f64,
    b: f64,
    nonconcave: bool,
}

/// Tridiagonal row `lower·V[i-1] + diag·V[i] + upper·V[i+1] = rhs`.
#[derive(Debug, Clone, Copy, Default)]
struct Row {
    lower: f64,
    diag: f64,
    upper: f64,
    rhs: f64,
}

impl Row {
    fn apply(&self, v: &[f64], i: usize) -> f64 {
        let mut acc = self.diag * v[i];
        if i > 0 {
            acc += self.lower * v[i - 1];
        }
        if i + 1 < v.len() {
            acc += self.upper * v[i + 1];
        }
        acc
    }
}

fn solve_tridiagonal(rows: &[Row]) -> Result<Vec<f64>> {
    let n = rows.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut denom = rows[0].diag;
    if denom == 0.0 {
        return Err(Error::NumericalFailure("singular tridiagonal system".into()));
    }
    c[0] = rows[0].upper / denom;
    d[0] = rows[0].rhs / denom;
    for i in 1..n {
        denom = rows[i].diag - rows[i].lower * c[i - 1];
        if denom == 0.0 || !denom.is_finite() {
            return Err(Error::NumericalFailure("singular tridiagonal system".into()));
        }
        c[i] = rows[i].upper / denom;
        d[i] = (rows[i].rhs - rows[i].lower * d[i - 1]) / denom;
    }
    let mut x = d;
    for i in (0..n - 1).rev() {
        x[i] -= c[i] * x[i + 1];
    }
    Ok(x)
}

/// Second-order central estimates of `V′` and `V″` on a non-uniform grid.
fn derivatives(y: &[f64], v: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = y.len();
    let mut vp = vec![0.0; n];
    let mut vpp = vec![0.0; n];
    for i in 1..n - 1 {
        let hl = y[i] - y[i - 1];
        let hr = y[i + 1] - y[i];
        vp[i] =
            (hl * hl * v[i + 1] - hr * hr * v[i - 1] + (hr * hr - hl * hl) * v[i]) / (hl * hr * (hl + hr));
        vpp[i] = 2.0 * ((v[i + 1] - v[i]) / hr - (v[i] - v[i - 1]) / hl) / (hl + hr);
    }
    vp[0] = (v[1] - v[0]) / (y[1] - y[0]);
    vpp[0] = vpp[1];
    vp[n - 1] = (v[n - 1] - v[n - 2]) / (y[n - 1] - y[n - 2]);
    vpp[n - 1] = vpp[n - 2];
    (vp, vpp)
}

/// Controls at `y_min`.
///
/// Only a forward difference is available here. The curvature enters through
/// the relative risk aversion `R = −y V″/V′` of the previous iterate, which
/// turns the diffusion term into `−½ σ² p² y R V′`, so the row reads
/// `η V = u + V′ · d_eff` with `d_eff = drift − ½ σ² p² y R`. Consumption and
/// labor are held on `d_eff ≥ 0`, which keeps the row monotone and the state
/// from leaving the grid through the lower edge.
fn lower_boundary_control(
    y: f64,
    vp: f64,
    risk_aversion: f64,
    params: &ModelParams,
    bounds: &ControlBounds,
) -> Result<Control> {
    let pr = &params.preferences;
    let m = &params.market;
    let rho = pr.habit_speed;
    let w = params.labor.wage;
    let bbar = params.labor.max_labor;
    let kappa_max = bounds.kappa_max;
    let p = if vp > 0.0 && risk_aversion > 0.0 {
        ((m.mu - m.r) / (m.sigma * m.sigma * risk_aversion)).clamp(-bounds.max_leverage, bounds.max_leverage)
    } else {
        0.0
    };
    let (kappa, b) = if vp > 0.0 {
        consumption_and_labor(y, vp, params, kappa_max)?
    } else {
        (pr.alpha, 0.0)
    };
    // Everything in d_eff except −κ(1 + ρ̃y) + w b.
    let risk_term = 0.5 * m.sigma * m.sigma * p * p * y * risk_aversion.max(0.0);
    let base = (m.r + rho) * y + p * y * (m.mu - m.r) - risk_term;
    let scale = 1.0 + rho * y;
    if base - kappa * scale + w * b >= 0.0 {
        return Ok(Control {
            p,
            kappa,
            b,
            nonconcave: false,
        });
    }
    // Constrained to d_eff = 0: κ(b) = (base + w b) / (1 + ρ̃ y) ≥ α.
    let kappa_on_line = |b: f64| ((base + w * b) / scale).min(kappa_max);
    let b_lo = if w > 0.0 {
        ((pr.alpha * scale - base) / w).max(0.0)
    } else if pr.alpha * scale <= base {
        0.0
    } else {
        f64::INFINITY
    };
    if b_lo > bbar {
        // Floor consumption is unaffordable even at full labor.
        return Ok(Control {
            p,
            kappa: pr.alpha,
            b: bbar,
            nonconcave: false,
        });
    }
    // u(κ(b), b) is unimodal along the line.
    let objective = |b: f64| utility_unchecked(kappa_on_line(b).max(pr.alpha), b, pr);
    let (mut lo, mut hi) = (b_lo, bbar);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..80 {
        if hi - lo < 1e-14 {
            break;
        }
        let m1 = hi - phi * (hi - lo);
        let m2 = lo + phi * (hi - lo);
        if objective(m1) < objective(m2) {
            lo = m1;
        } else {
            hi = m2;
        }
    }
    let mut b = 0.5 * (lo + hi);
    for edge in [b_lo, bbar] {
        if objective(edge) >= objective(b) {
            b = edge;
        }
    }
    Ok(Control {
        p,
        kappa: kappa_on_line(b).max(pr.alpha),
        b,
        nonconcave: false,
    })
}

struct Workspace<'a> {
    y: &'a [f64],
    params: &'a ModelParams,
    config: &'a SolverConfig,
    bounds: ControlBounds,
}

impl Workspace<'_> {
    /// `−y V″/V′` at the first interior node, used in place of the curvature at `y_min`.
    fn boundary_risk_aversion(&self, vp: &[f64], vpp: &[f64]) -> f64 {
        let k = 5.min(self.y.len() - 2);
        let r = -self.y[k] * vpp[k] / vp[k];
        if r.is_finite() {
            r
        } else {
            0.0
        }
    }

    fn controls(&self, vp: &[f64], vpp: &[f64]) -> Result<Vec<Control>> {
        let n = self.y.len();
        (0..n)
            .into_par_iter()
            .map(|i| {
                if i == 0 {
                    {
                        let risk_aversion = self.boundary_risk_aversion(vp, vpp);
                        lower_boundary_control(self.y[0], vp[0], risk_aversion, self.params, &self.bounds)
                    }
                } else {
                    let c = maximize_bounded(self.y[i], vp[i], vpp[i], self.params, &self.bounds)?;
                    Ok(Control {
                        p: c.max.p,
                        kappa: c.max.kappa,
                        b: c.max.b,
                        nonconcave: c.nonconcave,
                    })
                }
            })
            .collect()
    }

    /// Continuation rows `η V − u − L_h V = 0` for every node except the last.
    ///
    /// The `y_min` row takes its curvature from the previous iterate.
    fn continuation_rows(&self, controls: &[Control], vp: &[f64], vpp: &[f64]) -> Vec<Row> {
        let y = self.y;
        let n = y.len();
        let eta = self.params.effective_rate;
        let mut rows = vec![Row::default(); n];
        for i in 0..n - 1 {
            let c = controls[i];
            let (drift, diffusion) = drift_diffusion_y(y[i], c.p, c.kappa, c.b, self.params);
            let rhs = utility_unchecked(c.kappa, c.b, &self.params.preferences);
            if i == 0 {
                let h = y[1] - y[0];
                let effective =
                    drift - 0.5 * diffusion * diffusion * self.boundary_risk_aversion(vp, vpp) / y[0];
                let up = effective.max(0.0) / h;
                rows[0] = Row {
                    lower: 0.0,
                    diag: eta + up,
                    upper: -up,
                    rhs,
                };
                continue;
            }
            let hl = y[i] - y[i - 1];
            let hr = y[i + 1] - y[i];
            let second = diffusion * diffusion / (hl + hr);
            let (mut lo, mut up) = (second / hl, second / hr);
            let central = (lo - drift / (hl + hr), up + drift / (hl + hr));
            if self.config.upwind == Upwind::CentralWhenMonotone && central.0 >= 0.0 && central.1 >= 0.0 {
                lo = central.0;
                up = central.1;
            } else if drift > 0.0 {
                up += drift / hr;
            } else {
                lo -= drift / hl;
            }
            rows[i] = Row {
                lower: -lo,
                diag: eta + lo + up,
                upper: -up,
                rhs,
            };
        }
        rows
    }

    fn last_row(&self, g_last: f64) -> Row {
        let n = self.y.len();
        match self.config.obstacle {
            ObstacleMode::Disabled => {
                // Homothetic extrapolation V(y_N) = V(y_{N−1}) (y_N / y_{N−1})^{1−γ}.
                let ratio = self.y[n - 1] / self.y[n - 2];
                let c = ratio.powf(1.0 - self.params.preferences.gamma);
                Row {
                    lower: -c,
                    diag: 1.0,
                    upper: 0.0,
                    rhs: 0.0,
                }
            }
            _ => Row {
                lower: 0.0,
                diag: 1.0,
                upper: 0.0,
                rhs: g_last,
            },
        }
    }
}

/// Per-node `min(η V − H(V), V − G)` for the given rows and obstacle.
fn complementarity_from_rows(rows: &[Row], v: &[f64], g: &[f64]) -> Vec<f64> {
    (0..v.len())
        .map(|i| (rows[i].apply(v, i) - rows[i].rhs).min(v[i] - g[i]))
        .collect()
}

/// Solve the stationary variational inequality by policy iteration.
pub fn solve_vi(grid: &Grid, params: &ModelParams, config: &SolverConfig) -> Result<SolveResult> {
    grid.validate()?;
    config.validate()?;
    params.ensure_valid()?;

    let y = grid.points();
    let n = y.len();
    let obstacles: Vec<_> = y.iter().map(|&v| obstacle_unchecked(v, params)).collect();
    let g: Vec<f64> = obstacles.iter().map(|o| o.g).collect();
    let kappa_max = config
        .kappa_max
        .unwrap_or_else(|| 10f64.max(2.0 * params.annuity_rate * grid.y_max));
    let ws = Workspace {
        y: &y,
        params,
        config,
        bounds: ControlBounds {
            kappa_max,
            max_leverage: config.max_leverage,
        },
    };
    let obstacle_on = config.obstacle != ObstacleMode::Disabled;

    // Start from the annuitization payoff and its exact derivatives.
    let mut v = g.clone();
    let mut vp: Vec<f64> = obstacles.iter().map(|o| o.dg).collect();
    let mut vpp: Vec<f64> = obstacles.iter().map(|o| o.d2g).collect();
    let mut stopped = vec![false; n];
    stopped[n - 1] = obstacle_on;

    let mut converged = false;
    let mut last_update = f64::INFINITY;
    let mut sweeps = 0;
    while sweeps < config.max_sweeps {
        sweeps += 1;
        let controls = ws.controls(&vp, &vpp)?;
        let mut rows = ws.continuation_rows(&controls, &vp, &vpp);
        rows[n - 1] = ws.last_row(g[n - 1]);

        let mut next_stopped = vec![false; n];
        next_stopped[n - 1] = obstacle_on;
        match config.obstacle {
            ObstacleMode::Projection if sweeps > 1 => {
                for i in 0..n - 1 {
                    let continuation = rows[i].apply(&v, i) - rows[i].rhs;
                    next_stopped[i] = v[i] - g[i] <= continuation;
                }
            }
            ObstacleMode::Penalty { .. } if sweeps > 1 => {
                for i in 0..n - 1 {
                    next_stopped[i] = v[i] < g[i];
                }
            }
            _ => {}
        }
        let mut system = rows.clone();
        for i in 0..n - 1 {
            if !next_stopped[i] {
                continue;
            }
            match config.obstacle {
                ObstacleMode::Projection => {
                    system[i] = Row {
                        lower: 0.0,
                        diag: 1.0,
                        upper: 0.0,
                        rhs: g[i],
                    }
                }
                ObstacleMode::Penalty { coefficient } => {
                    system[i].diag += coefficient;
                    system[i].rhs += coefficient * g[i];
                }
                ObstacleMode::Disabled => {}
            }
        }
        let next = solve_tridiagonal(&system)?;
        last_update = next
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - b).abs() / b.abs().max(1.0))
            .fold(0.0, f64::max);
        if !last_update.is_finite() {
            return Err(Error::NumericalFailure(format!(
                "value iterate became non-finite after {sweeps} sweeps"
            )));
        }
        let same_stop_set = next_stopped == stopped;
        v = next;
        stopped = next_stopped;
        (vp, vpp) = derivatives(&y, &v);
        if sweeps > 1 && same_stop_set && last_update < config.tolerance {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            sweeps,
            residual: last_update,
        });
    }

    // Report controls and residuals for the converged iterate.
    let controls = ws.controls(&vp, &vpp)?;
    let mut rows = ws.continuation_rows(&controls, &vp, &vpp);
    rows[n - 1] = ws.last_row(g[n - 1]);
    let hjb_residual: Vec<f64> = (0..n)
        .map(|i| {
            if stopped[i] || i == n - 1 {
                0.0
            } else {
                rows[i].apply(&v, i) - rows[i].rhs
            }
        })
        .collect();
    let complementarity = if obstacle_on {
        let mut c = complementarity_from_rows(&rows, &v, &g);
        if let ObstacleMode::Projection = config.obstacle {
            c[n - 1] = v[n - 1] - g[n - 1];
        }
        c
    } else {
        hjb_residual.clone()
    };

    let merton = merton_weight(params);
    let bbar = params.labor.max_labor;
    let mut p = Vec::with_capacity(n);
    let mut kappa = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    let mut region = Vec::with_capacity(n);
    let mut nonconcave_nodes = Vec::new();
    for i in 0..n {
        if stopped[i] {
            p.push(merton);
            kappa.push(params.annuity_rate * y[i]);
            b.push(0.0);
            region.push(Region::Stopped);
            continue;
        }
        let c = controls[i];
        if c.nonconcave {
            nonconcave_nodes.push(i);
        }
        p.push(c.p);
        kappa.push(c.kappa);
        b.push(c.b);
        region.push(if bbar > 0.0 && c.b >= bbar {
            Region::Corner
        } else {
            Region::Interior
        });
    }
    if obstacle_on {
        // Value matching holds exactly on stopped nodes under projection.
        if let ObstacleMode::Projection = config.obstacle {
            for i in 0..n {
                if stopped[i] {
                    v[i] = g[i];
                }
            }
        }
    }

    let mut result = SolveResult {
        y,
        value: v,
        obstacle: g,
        p,
        kappa,
        b,
        region,
        thresholds: Default::default(),
        diagnostics: SolveDiagnostics {
            hjb_residual,
            complementarity,
            sweeps,
            last_update,
            nonconcave_nodes,
            boundary: Default::default(),
        },
        params: *params,
        config: *config,
    };
    result.thresholds = extract_thresholds(&result)?;
    if obstacle_on {
        let idx = result.stop_index().expect("thresholds found a stopped node");
        if idx == n - 1 {
            return Err(Error::GridTooSmall(format!(
                "only the last node y_max = {} is stopped; raise y_max",
                grid.y_max
            )));
        }
    }
    result.diagnostics.boundary = boundary_diagnostics(&result, params)?;
    Ok(result)
}

/// Recompute `min(η V − H(V), V − G)` for an arbitrary value array on the
/// result's grid, using the controls that maximize the Hamiltonian of `v`.
pub fn complementarity_residuals(result: &SolveResult, v: &[f64]) -> Result<Vec<f64>> {
    let params = &result.params;
    let config = &result.config;
    let n = result.y.len();
    if v.len() != n {
        return Err(Error::DomainError(format!(
            "value array has {} entries, grid has {n}",
            v.len()
        )));
    }
    let y_max = result.y[n - 1];
    let ws = Workspace {
        y: &result.y,
        params,
        config,
        bounds: ControlBounds {
            kappa_max: config
                .kappa_max
                .unwrap_or_else(|| 10f64.max(2.0 * params.annuity_rate * y_max)),
            max_leverage: config.max_leverage,
        },
    };
    let (vp, vpp) = derivatives(&result.y, v);
    let controls = ws.controls(&vp, &vpp)?;
    let mut rows = ws.continuation_rows(&controls, &vp, &vpp);
    rows[n - 1] = ws.last_row(result.obstacle[n - 1]);
    Ok(complementarity_from_rows(&rows, v, &result.obstacle))
}
