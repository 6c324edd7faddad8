use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use hjbvi_core::mortality::{npr, survival, DiscountSpec, GompertzParams, MortalityLaw};
use hjbvi_core::policy::{ExportFormat, PolicyTable};
use hjbvi_core::sim::{self, PathStats};
use hjbvi_core::{solve_vi, Error, SolveResult};
use rayon::prelude::*;

use crate::config::{RunConfig, SimMortality};
use crate::CliError;

/// Header of the premium-ratio CSV.
pub const NPR_HEADER: &str = "subjective_modal_age,npr";
/// Header of the policy-surface CSV.
pub const SURFACE_HEADER: &str = "age,eta,y,region,kappa_star,b_star,p_star,pi_scaled";
/// Header of the companion survival CSV.
pub const SURVIVAL_HEADER: &str = "modal_age,t,age,survival";

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "none".into(), |x| x.to_string())
}

/// Premium ratios for each configured subjective modal age, as CSV.
pub fn npr_csv(config: &RunConfig) -> Result<String, CliError> {
    let c = &config.npr;
    if c.subjective_modal_ages.is_empty() {
        return Err(Error::ConfigError("npr.subjective_modal_ages is empty".into()).into());
    }
    let objective = GompertzParams::new(c.age, c.objective_modal_age, c.dispersion)?;
    let mut csv = format!("{NPR_HEADER}\n");
    for &m in &c.subjective_modal_ages {
        let subjective = GompertzParams::new(c.age, m, c.dispersion)?;
        let ratio = npr(&subjective, &objective, c.rate)?;
        let _ = writeln!(csv, "{m},{ratio:.6}");
    }
    Ok(csv)
}

pub fn npr_table(config: &RunConfig, out_path: Option<&Path>, out: &mut dyn Write) -> Result<(), CliError> {
    let csv = npr_csv(config)?;
    let c = &config.npr;
    writeln!(
        out,
        "normalized premium ratio (n = {}, lambda = {}, r = {}, objective m = {})",
        c.age, c.dispersion, c.rate, c.objective_modal_age
    )
    .map_err(Error::from)?;
    writeln!(out, "{:>12}  {:>8}", "m_subjective", "npr").map_err(Error::from)?;
    for line in csv.lines().skip(1) {
        let (m, v) = line.split_once(',').expect("two columns");
        let v: f64 = v.parse().expect("written above");
        writeln!(out, "{m:>12}  {v:>8.4}").map_err(Error::from)?;
    }
    if let Some(path) = out_path {
        fs::write(path, csv).map_err(Error::from)?;
    }
    Ok(())
}

/// Solve at the configured age.
pub fn solve_at(config: &RunConfig, age: f64) -> Result<SolveResult, Error> {
    let params = config.model_at(age)?;
    solve_vi(&config.grid()?, &params, &config.solver()?)
}

pub fn solve(
    config: &RunConfig,
    out_path: Option<&Path>,
    format: ExportFormat,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let age = config.mortality.age;
    let result = solve_at(config, age)?;
    let table = PolicyTable::from_solve(&result, age);
    let d = &result.diagnostics;
    let b = &d.boundary;
    let worst = d.complementarity.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut s = String::new();
    let _ = writeln!(s, "age = {age}");
    let _ = writeln!(s, "eta = {}", result.params.effective_rate);
    let _ = writeln!(s, "annuity_rate = {}", result.params.annuity_rate);
    let _ = writeln!(s, "sweeps = {}", d.sweeps);
    let _ = writeln!(s, "last_update = {:e}", d.last_update);
    let _ = writeln!(s, "max_complementarity = {worst:e}");
    let _ = writeln!(s, "nonconcave_nodes = {}", d.nonconcave_nodes.len());
    match result.thresholds.y_star {
        Some(ys) => {
            let _ = writeln!(s, "y_tilde = {}", opt(result.thresholds.y_tilde));
            let _ = writeln!(s, "y_star = {ys}");
            let _ = writeln!(s, "y_star_refined = {}", opt(result.thresholds.y_star_refined));
            let _ = writeln!(s, "value_matching = {}", opt(b.value_matching));
            let _ = writeln!(s, "smooth_pasting = {}", opt(b.smooth_pasting));
            let _ = writeln!(s, "super_contact = {}", opt(b.super_contact));
        }
        None => {
            let _ = writeln!(s, "no stopping region");
            let _ = writeln!(s, "y_tilde = {}", opt(result.thresholds.y_tilde));
        }
    }
    let _ = writeln!(s, "labor_regimes = {:?}", table.labor_regimes());
    let cc = table.closed_form_crosschecks(&result.params);
    let _ = writeln!(
        s,
        "interior_labor_closed_form_max_rel_dev = {}",
        opt(cc.interior_labor_max_rel_dev)
    );
    out.write_all(s.as_bytes()).map_err(Error::from)?;
    if let Some(path) = out_path {
        table.export(path, format)?;
        writeln!(out, "policy written to {}", path.display()).map_err(Error::from)?;
    }
    Ok(())
}

pub struct SimulateOptions<'a> {
    pub policy: Option<&'a Path>,
    pub benchmark: bool,
    pub trace: Option<&'a Path>,
    pub out: Option<&'a Path>,
}

/// Discounting along simulated paths for `table`.
pub fn path_discount(config: &RunConfig, table: &PolicyTable) -> Result<DiscountSpec, Error> {
    let beta = table.params.preferences.beta;
    match config.simulation.mortality {
        SimMortality::Stationary => DiscountSpec::new(
            beta,
            MortalityLaw::ConstantForce {
                force: table.eta - beta,
            },
        ),
        SimMortality::Aging => DiscountSpec::new(beta, config.law_at(table.age)?),
    }
}

fn stats_rows(prefix: &str, stats: &PathStats, rows: &mut Vec<(String, String)>) {
    let mut push = |k: &str, v: String| rows.push((format!("{prefix}{k}"), v));
    push("paths", stats.paths.to_string());
    push("seed", stats.seed.to_string());
    push("mean_utility", stats.mean_utility.to_string());
    push("ci_half_width", stats.ci_half_width.to_string());
    for (q, t) in &stats.tau_quantiles {
        push(&format!("tau_q{q}"), t.to_string());
    }
    push("fraction_never_stopped", stats.fraction_never_stopped.to_string());
    push(
        "solvency_violation_fraction",
        stats.solvency_violation_fraction.to_string(),
    );
    push("mean_wealth_at_stop", opt(stats.mean_wealth_at_stop));
}

pub fn simulate(config: &RunConfig, opts: &SimulateOptions<'_>, out: &mut dyn Write) -> Result<(), CliError> {
    let table = match opts.policy {
        Some(path) => PolicyTable::import(path)?,
        None => PolicyTable::from_solve(&solve_at(config, config.mortality.age)?, config.mortality.age),
    };
    let sim_config = config.sim()?;
    let discount = path_discount(config, &table)?;
    let stats = sim::simulate(&table, &discount, &sim_config)?;
    let mut rows = Vec::new();
    rows.push(("y0".to_string(), sim_config.y0.to_string()));
    rows.push(("dt".to_string(), sim_config.dt.to_string()));
    stats_rows("", &stats, &mut rows);
    if opts.benchmark {
        let cmp = sim::compare(&table, &table.merton_benchmark(), &discount, &sim_config)?;
        rows.push(("benchmark_mean_utility".into(), cmp.b.mean.to_string()));
        rows.push(("benchmark_ci_half_width".into(), cmp.b.ci_half_width.to_string()));
        rows.push(("gap_mean".into(), cmp.mean_difference.to_string()));
        rows.push(("gap_ci_half_width".into(), cmp.ci_half_width.to_string()));
    }
    for (k, v) in &rows {
        writeln!(out, "{k} = {v}").map_err(Error::from)?;
    }
    if let Some(path) = opts.out {
        let mut csv = String::from("metric,value\n");
        for (k, v) in &rows {
            let _ = writeln!(csv, "{k},{v}");
        }
        fs::write(path, csv).map_err(Error::from)?;
    }
    if let Some(path) = opts.trace {
        let file = fs::File::create(path).map_err(Error::from)?;
        let writer = std::io::BufWriter::new(file);
        sim::write_trace(
            &table,
            &discount,
            &sim_config,
            config.simulation.trace_paths,
            writer,
        )?;
    }
    Ok(())
}

fn surface_rows(table: &PolicyTable, csv: &mut String) {
    for i in 0..table.y.len() {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            table.age,
            table.eta,
            table.y[i],
            table.region[i].as_str(),
            table.kappa[i],
            table.b[i],
            table.p[i],
            table.p[i] * table.y[i]
        );
    }
}

/// Survival curves `ₜp` from the configured age for each surface modal age.
pub fn survival_csv(config: &RunConfig) -> Result<String, Error> {
    let s = &config.surface;
    if !(s.survival_step > 0.0 && s.survival_years >= 0.0) {
        return Err(Error::ConfigError(
            "surface.survival_step must be positive and survival_years non-negative".into(),
        ));
    }
    let age = config.mortality.age;
    let steps = (s.survival_years / s.survival_step).round() as usize;
    let mut csv = format!("{SURVIVAL_HEADER}\n");
    for &m in &s.survival_modal_ages {
        let law = MortalityLaw::Gompertz(GompertzParams::new(age, m, config.mortality.dispersion)?);
        for j in 0..=steps {
            let t = j as f64 * s.survival_step;
            let _ = writeln!(csv, "{m},{t},{},{}", age + t, survival(&law, t)?);
        }
    }
    Ok(csv)
}

/// `<stem>_survival.csv` next to the surface file.
pub fn survival_path(surface: &Path) -> PathBuf {
    let stem = surface
        .file_stem()
        .map_or_else(|| "surface".into(), |s| s.to_string_lossy().into_owned());
    surface.with_file_name(format!("{stem}_survival.csv"))
}

pub fn surface(config: &RunConfig, out_path: Option<&Path>, out: &mut dyn Write) -> Result<(), CliError> {
    let ages = &config.surface.ages;
    if ages.is_empty()
        || ages
            .windows(2)
            .any(|w| w[0].partial_cmp(&w[1]) != Some(std::cmp::Ordering::Less))
    {
        return Err(
            Error::ConfigError("surface.ages must be non-empty and strictly increasing".into()).into(),
        );
    }
    let solves: Vec<Result<PolicyTable, Error>> = ages
        .par_iter()
        .map(|&age| solve_at(config, age).map(|r| PolicyTable::from_solve(&r, age)))
        .collect();

    let mut csv = format!("{SURFACE_HEADER}\n");
    let mut failed = Vec::new();
    let mut detail = Vec::new();
    for (&age, solved) in ages.iter().zip(&solves) {
        match solved {
            Ok(table) => {
                surface_rows(table, &mut csv);
                writeln!(
                    out,
                    "age = {age}: eta = {}, y_tilde = {}, y_star = {}",
                    table.eta,
                    opt(table.y_tilde),
                    opt(table.y_star)
                )
                .map_err(Error::from)?;
            }
            Err(e) => {
                writeln!(out, "age = {age}: failed: {e}").map_err(Error::from)?;
                failed.push(age);
                detail.push(format!("{age}: {e}"));
            }
        }
    }
    match out_path {
        Some(path) => {
            fs::write(path, &csv).map_err(Error::from)?;
            fs::write(survival_path(path), survival_csv(config)?).map_err(Error::from)?;
        }
        None => out.write_all(csv.as_bytes()).map_err(Error::from)?,
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::PartialSurface {
            ages: failed,
            detail: detail.join("; "),
        })
    }
}
