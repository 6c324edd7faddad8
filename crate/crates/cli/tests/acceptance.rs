//! Acceptance criteria. Prints one `PASS`/`FAIL` line per criterion and
//! exits non-zero if any fails. Run with
//! `cargo test -p hjbvi-cli --test acceptance`.

use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use hjbvi_cli::commands::{path_discount, solve_at};
use hjbvi_cli::{run, RunConfig};
use hjbvi_core::model::{merton_weight, obstacle};
use hjbvi_core::mortality::{
    conditional_survival, fair_rate, force_of_mortality, survival, DiscountSpec, GompertzParams, MortalityLaw,
};
use hjbvi_core::numerics::{integrate, QuadratureSpec};
use hjbvi_core::policy::{LaborRegime, PolicyTable};
use hjbvi_core::sim::{self, SimConfig};
use hjbvi_core::{solve_vi, Grid, LaborParams, ModelParams, ObstacleMode, Region, SolverConfig};

/// Four-decimal precision of the reference premium ratios.
const NPR_TOL: f64 = 5e-4;
const NPR_BUDGET: Duration = Duration::from_secs(1);
const NPR_TABLE: [(f64, f64); 5] = [
    (60.0, 0.3642),
    (65.0, 0.4913),
    (70.0, 0.6385),
    (75.0, 0.8066),
    (80.0, 1.0000),
];
const ORACLE_TOL: f64 = 1e-10;
const MERTON_REL_TOL: f64 = 5e-3;
const MERTON_P_TOL: f64 = 1e-2;
const MERTON_BUDGET: Duration = Duration::from_secs(5);
const SOLVER_TOL: f64 = 1e-6;
const SIM_BUDGET: Duration = Duration::from_secs(30);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn cli(args: &[&str]) -> (i32, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let mut argv = vec!["hjbvi"];
    argv.extend_from_slice(args);
    let code = run(argv, &mut out, &mut err);
    (
        code,
        String::from_utf8_lossy(&out).into_owned(),
        String::from_utf8_lossy(&err).into_owned(),
    )
}

fn sci(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| format!("{v:.2e}"))
        .collect::<Vec<_>>()
        .join(", ")
}

fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

fn npr_reference(dir: &Path) -> Outcome {
    let out = dir.join("npr.csv");
    let start = Instant::now();
    let (code, _, err) = cli(&["npr-table", "--out", path_str(&out)]);
    let elapsed = start.elapsed();
    if code != 0 {
        return outcome(false, format!("exit {code}: {err}"));
    }
    let csv = fs::read_to_string(&out).unwrap();
    let mut worst = 0.0f64;
    let mut rows = Vec::new();
    for ((m, expected), line) in NPR_TABLE.iter().zip(csv.lines().skip(1)) {
        let (col_m, col_v) = line.split_once(',').unwrap();
        assert_eq!(col_m.parse::<f64>().unwrap(), *m);
        let got: f64 = col_v.parse().unwrap();
        worst = worst.max((got - expected).abs());
        rows.push(format!("{m}:{got:.4}/{expected:.4}"));
    }
    outcome(
        worst <= NPR_TOL && elapsed < NPR_BUDGET,
        format!(
            "max |NPR - reference| = {worst:.2e} (tol {NPR_TOL:e}), {elapsed:.2?}; {}",
            rows.join(" ")
        ),
    )
}

fn constant_force_oracle() -> Outcome {
    let spec = DiscountSpec::new(0.03, MortalityLaw::ConstantForce { force: 0.02 }).unwrap();
    let k = fair_rate(&spec).unwrap();
    let err = (k - 0.05).abs();
    outcome(err <= ORACLE_TOL, format!("k = {k}, |k - 0.05| = {err:.2e}"))
}

fn gompertz_identity() -> Outcome {
    let law = MortalityLaw::Gompertz(GompertzParams::new(60.0, 80.0, 10.0).unwrap());
    let times = [1.0, 5.0, 10.0, 20.0, 40.0];
    let spec = QuadratureSpec::default();
    let mut worst_quad = 0.0f64;
    for &t in &times {
        let hazard = integrate(|s| force_of_mortality(&law, s).unwrap(), 0.0, t, &spec).unwrap();
        worst_quad = worst_quad.max((survival(&law, t).unwrap() - (-hazard).exp()).abs());
    }
    let mut worst_mult = 0.0f64;
    for &t in &times {
        for &s in times.iter().filter(|&&s| s >= t) {
            let lhs = survival(&law, s).unwrap();
            let rhs = survival(&law, t).unwrap() * conditional_survival(&law, t, s).unwrap();
            worst_mult = worst_mult.max((lhs - rhs).abs());
        }
    }
    outcome(
        worst_quad <= ORACLE_TOL && worst_mult <= ORACLE_TOL,
        format!("quadrature {worst_quad:.2e}, multiplicativity {worst_mult:.2e}"),
    )
}

fn merton_limit() -> Outcome {
    let mut params = ModelParams::baseline();
    params.labor = LaborParams {
        wage: 0.0,
        max_labor: 0.0,
    };
    params.preferences.habit_speed = 1e-6;
    params.preferences.alpha = 1e-9;
    let config = SolverConfig {
        obstacle: ObstacleMode::Disabled,
        ..Default::default()
    };
    let start = Instant::now();
    let result = match solve_vi(&Grid::default(), &params, &config) {
        Ok(r) => r,
        Err(e) => return outcome(false, e.to_string()),
    };
    let elapsed = start.elapsed();
    let g = params.preferences.gamma;
    let m = &params.market;
    let theta = m.sharpe();
    let nu = (params.effective_rate - (1.0 - g) * (m.r + theta * theta / (2.0 * g))) / g;
    let exact = |y: f64| nu.powf(-g) * y.powf(1.0 - g) / (1.0 - g);
    let n = result.y.len();
    let (mut rel, mut dp) = (0.0f64, 0.0f64);
    for i in n / 6..5 * n / 6 {
        let v = exact(result.y[i]);
        rel = rel.max(((result.value[i] - v) / v).abs());
        dp = dp.max((result.p[i] - merton_weight(&params)).abs());
    }
    outcome(
        rel < MERTON_REL_TOL && dp < MERTON_P_TOL && elapsed < MERTON_BUDGET,
        format!("max rel err {rel:.2e} (tol {MERTON_REL_TOL:e}), max |p - 0.625| {dp:.2e}, {elapsed:.2?}"),
    )
}

fn complementarity_and_structure(defaults: &RunConfig) -> Outcome {
    let r = match solve_at(defaults, 60.0) {
        Ok(r) => r,
        Err(e) => return outcome(false, e.to_string()),
    };
    let worst = r
        .diagnostics
        .complementarity
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let below = r
        .value
        .iter()
        .zip(&r.obstacle)
        .map(|(v, g)| g - v)
        .fold(f64::MIN, f64::max);
    let alpha = r.params.preferences.alpha;
    let floor_ok = r
        .kappa
        .iter()
        .zip(&r.region)
        .all(|(k, reg)| *reg == Region::Stopped || *k >= alpha);
    outcome(
        worst <= SOLVER_TOL && below <= 0.0 && r.regions_ordered() && floor_ok,
        format!(
            "max |complementarity| {worst:.2e}, max(G - V) {below:.2e}, ordered {}, kappa >= alpha {floor_ok}, y* = {:?}",
            r.regions_ordered(),
            r.thresholds.y_star
        ),
    )
}

fn free_boundary_convergence(defaults: &RunConfig) -> Outcome {
    let mut pasting = Vec::new();
    let mut matching = Vec::new();
    for nodes in [500, 1000, 2000] {
        let mut c = defaults.clone();
        c.grid.nodes = nodes;
        let r = match solve_at(&c, 60.0) {
            Ok(r) => r,
            Err(e) => return outcome(false, format!("N = {nodes}: {e}")),
        };
        let b = r.diagnostics.boundary;
        pasting.push(b.smooth_pasting.unwrap_or(f64::INFINITY));
        matching.push(b.value_matching.unwrap_or(f64::INFINITY));
    }
    let monotone = pasting.windows(2).all(|w| w[1] < w[0]);
    let orders: Vec<f64> = pasting.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let matched = matching.iter().all(|&m| m <= SOLVER_TOL);
    outcome(
        monotone && orders.iter().all(|&p| p >= 1.0) && matched,
        format!(
            "N = 500/1000/2000: smooth pasting [{}], observed orders {orders:.2?}, value matching [{}]",
            sci(&pasting),
            sci(&matching)
        ),
    )
}

fn policy_shape(defaults: &RunConfig) -> Outcome {
    let r = match solve_at(defaults, 60.0) {
        Ok(r) => r,
        Err(e) => return outcome(false, e.to_string()),
    };
    let table = PolicyTable::from_solve(&r, 60.0);
    let regimes = table.labor_regimes();
    let two_jumps = regimes == [LaborRegime::BelowCap, LaborRegime::AtCap, LaborRegime::Retired];
    let kink = table.scaled_investment_slopes();
    let kinked = kink.is_some_and(|(left, right)| right < left);
    let k = r.params.annuity_rate;
    let exact =
        r.y.iter()
            .zip(&r.region)
            .filter(|(_, reg)| **reg == Region::Stopped)
            .all(|(&y, _)| {
                let c = table.evaluate(y).unwrap();
                c.kappa == k * y && c.b == 0.0 && c.p == 0.625
            });
    outcome(
        two_jumps && kinked && exact,
        format!(
            "labor regimes {regimes:?}, p*y slopes (left, right) {kink:.3?}, stopping branch exact {exact}"
        ),
    )
}

fn simulation_consistency(defaults: &RunConfig) -> Outcome {
    let r = solve_at(defaults, 60.0).unwrap();
    let table = PolicyTable::from_solve(&r, 60.0);
    let discount = path_discount(defaults, &table).unwrap();
    let ys = r.thresholds.y_star.unwrap();
    let base = SimConfig {
        paths: 20_000,
        dt: 1.0 / 250.0,
        ..defaults.sim().unwrap()
    };
    let start = Instant::now();
    let mut pass = true;
    let mut parts = Vec::new();
    for f in [0.5, 0.9] {
        let cfg = SimConfig { y0: f * ys, ..base };
        let est = sim::estimate_objective(&table, &discount, &cfg).unwrap();
        let v = r.value_at(cfg.y0);
        let tol = est.ci_half_width + 2.0 * cfg.dt * v.abs();
        let diff = est.mean - v;
        pass &= diff.abs() <= tol;
        parts.push(format!(
            "y0 = {f} y*: |sim - V| = {:.2e} (tol {tol:.2e})",
            diff.abs()
        ));
    }
    for f in [1.0, 1.3] {
        let cfg = SimConfig { y0: f * ys, ..base };
        let est = sim::estimate_objective(&table, &discount, &cfg).unwrap();
        let g = obstacle(cfg.y0, &r.params).unwrap().g;
        let exact = est.mean == g && est.ci_half_width == 0.0;
        pass &= exact;
        parts.push(format!("y0 = {f} y*: equals G {exact}"));
    }
    let elapsed = start.elapsed();
    pass &= elapsed < SIM_BUDGET;
    parts.push(format!("{elapsed:.1?} (budget {SIM_BUDGET:?})"));
    outcome(pass, parts.join("; "))
}

fn benchmark_dominance(defaults: &RunConfig) -> Outcome {
    let r = solve_at(defaults, 60.0).unwrap();
    let table = PolicyTable::from_solve(&r, 60.0);
    let discount = path_discount(defaults, &table).unwrap();
    let cfg = defaults.sim().unwrap();
    let c = sim::compare(&table, &table.merton_benchmark(), &discount, &cfg).unwrap();
    outcome(
        c.mean_difference - c.ci_half_width >= 0.0,
        format!(
            "y0 = {}: gap {:.4} +/- {:.4} (solved {:.4}, benchmark {:.4})",
            cfg.y0, c.mean_difference, c.ci_half_width, c.a.mean, c.b.mean
        ),
    )
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(f)
}

fn determinism(dir: &Path) -> Outcome {
    let config = dir.join("det.toml");
    fs::write(
        &config,
        "grid.nodes = 600\nsimulation.paths = 400\nsurface.ages = [60.0, 70.0]\n",
    )
    .unwrap();
    let produce = |tag: &str| -> Vec<Vec<u8>> {
        let files = [
            "policy.csv",
            "sim.csv",
            "trace.csv",
            "surface.csv",
            "surface_survival.csv",
        ]
        .map(|f| dir.join(format!("{tag}_{f}")));
        let c = path_str(&config);
        let runs: [Vec<&str>; 3] = [
            vec!["solve", "--config", c, "--out", path_str(&files[0])],
            vec![
                "simulate",
                "--config",
                c,
                "--benchmark",
                "--out",
                path_str(&files[1]),
                "--trace",
                path_str(&files[2]),
            ],
            vec!["surface", "--config", c, "--out", path_str(&files[3])],
        ];
        for args in runs {
            let (code, _, err) = cli(&args);
            assert_eq!(code, 0, "{args:?}: {err}");
        }
        files.iter().map(|f| fs::read(f).unwrap()).collect()
    };
    let a = in_pool(1, || produce("a"));
    let b = in_pool(1, || produce("b"));
    let c = in_pool(4, || produce("c"));
    let repeat = a == b;
    let threads = a == c;
    let bytes: usize = a.iter().map(Vec::len).sum();
    outcome(
        repeat && threads,
        format!("repeat identical {repeat}, 1 vs 4 threads identical {threads}, {bytes} bytes compared"),
    )
}

type Criterion<'a> = Box<dyn Fn() -> Outcome + 'a>;

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let defaults = RunConfig::default();
    let criteria: Vec<(&str, Criterion)> = vec![
        ("1 premium-ratio table", Box::new(|| npr_reference(dir.path()))),
        ("2 constant-force annuity oracle", Box::new(constant_force_oracle)),
        ("3 gompertz survival identity", Box::new(gompertz_identity)),
        ("4 merton-limit oracle", Box::new(merton_limit)),
        (
            "5 complementarity and structure",
            Box::new(|| complementarity_and_structure(&defaults)),
        ),
        (
            "6 free-boundary convergence",
            Box::new(|| free_boundary_convergence(&defaults)),
        ),
        ("7 policy-shape properties", Box::new(|| policy_shape(&defaults))),
        (
            "8 simulation-solver consistency",
            Box::new(|| simulation_consistency(&defaults)),
        ),
        (
            "9 benchmark dominance",
            Box::new(|| benchmark_dominance(&defaults)),
        ),
        ("10 determinism", Box::new(|| determinism(dir.path()))),
    ];
    let mut failed = 0;
    for (name, check) in &criteria {
        let o = check();
        println!(
            "{} criterion {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        failed += usize::from(!o.pass);
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
