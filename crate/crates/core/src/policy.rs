//! Piecewise policy functions built from a solved variational inequality.
//!
//! A [`PolicyTable`] stores the optimal consumption ratio `κ*`, labor `b*`
//! and risky weight `p*` on the solver grid together with the free
//! boundaries. Above `y*` the table answers with the exact annuitized branch
//! `(k y, 0, (μ−r)/(σ²γ))`; below it values are interpolated linearly, but
//! never across a region boundary.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hjb::{Region, SolveResult};
use crate::model::{merton_weight, ModelParams};

/// Header row of the CSV export.
pub const CSV_HEADER: &str = "y,region,kappa_star,b_star,p_star,pi_scaled";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExportFormat {
    Csv,
    Json,
}

impl FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ExportFormat::Csv),
            "json" => Ok(ExportFormat::Json),
            other => Err(Error::ConfigError(format!(
                "unknown export format `{other}` (expected csv or json)"
            ))),
        }
    }
}

/// Controls at one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyPoint {
    pub kappa: f64,
    pub b: f64,
    pub p: f64,
    pub region: Region,
    /// Set when `y` lies below the first grid node (or above the last one
    /// without a stopping region) and the nearest node's controls were used.
    pub extrapolated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyTable {
    pub y: Vec<f64>,
    pub kappa: Vec<f64>,
    pub b: Vec<f64>,
    pub p: Vec<f64>,
    pub region: Vec<Region>,
    pub y_tilde: Option<f64>,
    pub y_star: Option<f64>,
    pub params: ModelParams,
    /// Age at which the stationary problem was solved.
    pub age: f64,
    /// Effective discount rate `η` used by the solve.
    pub eta: f64,
}

/// Run of consecutive nodes sharing one labor regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LaborRegime {
    /// `0 ≤ b* < b̄` while working.
    BelowCap,
    /// `b* = b̄`.
    AtCap,
    /// Annuitized, `b* = 0`.
    Retired,
}

/// Closed-form comparisons for a solved table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CrossCheckReport {
    /// Largest `|b* − b_cf| / b_cf` on the working nodes below `ỹ` (or below
    /// `y*` when labor never hits its cap), with
    /// `b_cf = ((1−α)/(wα)) (k^{1−γ}/η)^{−1/γ} y`.
    pub interior_labor_max_rel_dev: Option<f64>,
    /// Number of nodes entering the labor comparison.
    pub interior_labor_nodes: usize,
    /// Largest `|κ*/y − k|` on stopped nodes.
    pub withdrawal_max_abs_dev: Option<f64>,
}

impl PolicyTable {
    pub fn from_solve(result: &SolveResult, age: f64) -> Self {
        Self {
            y: result.y.clone(),
            kappa: result.kappa.clone(),
            b: result.b.clone(),
            p: result.p.clone(),
            region: result.region.clone(),
            y_tilde: result.thresholds.y_tilde,
            y_star: result.thresholds.y_star,
            params: result.params,
            age,
            eta: result.params.effective_rate,
        }
    }

    /// The comparison policy: consume the annuity-equivalent `max(k y, α)`,
    /// never work, hold the Merton weight, and annuitize at the same `y*`.
    pub fn merton_benchmark(&self) -> Self {
        let k = self.params.annuity_rate;
        let alpha = self.params.preferences.alpha;
        let weight = merton_weight(&self.params);
        let stopped = |y: f64| self.y_star.is_some_and(|ys| y >= ys);
        Self {
            y: self.y.clone(),
            kappa: self
                .y
                .iter()
                .map(|&y| if stopped(y) { k * y } else { (k * y).max(alpha) })
                .collect(),
            b: vec![0.0; self.y.len()],
            p: vec![weight; self.y.len()],
            region: self
                .y
                .iter()
                .map(|&y| {
                    if stopped(y) {
                        Region::Stopped
                    } else {
                        Region::Interior
                    }
                })
                .collect(),
            y_tilde: None,
            y_star: self.y_star,
            params: self.params,
            age: self.age,
            eta: self.eta,
        }
    }

    /// The annuitized branch at `y`.
    fn stopping_branch(&self, y: f64) -> PolicyPoint {
        PolicyPoint {
            kappa: self.params.annuity_rate * y,
            b: 0.0,
            p: merton_weight(&self.params),
            region: Region::Stopped,
            extrapolated: false,
        }
    }

    fn node(&self, i: usize, extrapolated: bool) -> PolicyPoint {
        PolicyPoint {
            kappa: self.kappa[i],
            b: self.b[i],
            p: self.p[i],
            region: self.region[i],
            extrapolated,
        }
    }

    /// Controls at `y`.
    pub fn evaluate(&self, y: f64) -> Result<PolicyPoint> {
        if !(y > 0.0) || !y.is_finite() {
            return Err(Error::DomainError(format!(
                "policy needs a positive finite ratio, got {y}"
            )));
        }
        if self.y_star.is_some_and(|ys| y >= ys) {
            return Ok(self.stopping_branch(y));
        }
        let n = self.y.len();
        if y < self.y[0] {
            return Ok(self.node(0, true));
        }
        if y >= self.y[n - 1] {
            return Ok(self.node(n - 1, y > self.y[n - 1]));
        }
        let i = self.y.partition_point(|&v| v <= y) - 1;
        if self.region[i] != self.region[i + 1] {
            // y sits below the next region's first node: hold this region's value.
            return Ok(self.node(i, false));
        }
        let w = (y - self.y[i]) / (self.y[i + 1] - self.y[i]);
        let lerp = |v: &[f64]| v[i] + w * (v[i + 1] - v[i]);
        Ok(PolicyPoint {
            kappa: lerp(&self.kappa),
            b: lerp(&self.b),
            p: lerp(&self.p),
            region: self.region[i],
            extrapolated: false,
        })
    }

    /// Annuity income per unit of wealth: zero while working, `k` once annuitized.
    pub fn withdrawal_rate(&self, y: f64) -> f64 {
        if self.y_star.is_some_and(|ys| y >= ys) {
            self.params.annuity_rate
        } else {
            0.0
        }
    }

    /// Labor regimes along increasing `y`, with consecutive duplicates merged.
    pub fn labor_regimes(&self) -> Vec<LaborRegime> {
        let bbar = self.params.labor.max_labor;
        let mut out: Vec<LaborRegime> = Vec::new();
        for (r, &b) in self.region.iter().zip(&self.b) {
            let regime = match r {
                Region::Stopped => LaborRegime::Retired,
                _ if bbar > 0.0 && b >= bbar => LaborRegime::AtCap,
                _ => LaborRegime::BelowCap,
            };
            if out.last() != Some(&regime) {
                out.push(regime);
            }
        }
        out
    }

    /// One-sided slopes of the scaled investment `p* y` on either side of
    /// `y*`: `(slope(y*⁻), slope(y*⁺))`.
    pub fn scaled_investment_slopes(&self) -> Option<(f64, f64)> {
        let i = self.region.iter().position(|r| *r == Region::Stopped)?;
        if i < 2 || i + 1 >= self.y.len() {
            return None;
        }
        let pi = |j: usize| self.p[j] * self.y[j];
        let left = (pi(i - 1) - pi(i - 2)) / (self.y[i - 1] - self.y[i - 2]);
        let right = (pi(i + 1) - pi(i)) / (self.y[i + 1] - self.y[i]);
        Some((left, right))
    }

    /// Compare the table with the closed-form interior-labor rule and the
    /// annuitized withdrawal rate.
    pub fn closed_form_crosschecks(&self, params: &ModelParams) -> CrossCheckReport {
        let pr = &params.preferences;
        let w = params.labor.wage;
        let k = params.annuity_rate;
        let slope =
            (1.0 - pr.alpha) / (w * pr.alpha) * (k.powf(1.0 - pr.gamma) / self.eta).powf(-1.0 / pr.gamma);
        let upper = self.y_tilde.or(self.y_star).unwrap_or(f64::INFINITY);
        let mut labor_dev: Option<f64> = None;
        let mut labor_nodes = 0;
        if w > 0.0 {
            for i in 0..self.y.len() {
                if self.y[i] >= upper || self.region[i] != Region::Interior {
                    continue;
                }
                let closed = slope * self.y[i];
                let dev = ((self.b[i] - closed) / closed).abs();
                labor_dev = Some(labor_dev.map_or(dev, |d| d.max(dev)));
                labor_nodes += 1;
            }
        }
        let withdrawal = self
            .region
            .iter()
            .enumerate()
            .filter(|(_, r)| **r == Region::Stopped)
            .map(|(i, _)| (self.kappa[i] / self.y[i] - k).abs())
            .reduce(f64::max);
        CrossCheckReport {
            interior_labor_max_rel_dev: labor_dev,
            interior_labor_nodes: labor_nodes,
            withdrawal_max_abs_dev: withdrawal,
        }
    }

    fn metadata(&self) -> Vec<(&'static str, String)> {
        let opt = |v: Option<f64>| v.map_or_else(|| "none".to_string(), |x| x.to_string());
        let m = &self.params.market;
        let pr = &self.params.preferences;
        let l = &self.params.labor;
        vec![
            ("age", self.age.to_string()),
            ("eta", self.eta.to_string()),
            ("y_tilde", opt(self.y_tilde)),
            ("y_star", opt(self.y_star)),
            ("market.r", m.r.to_string()),
            ("market.mu", m.mu.to_string()),
            ("market.sigma", m.sigma.to_string()),
            ("preferences.beta", pr.beta.to_string()),
            ("preferences.gamma", pr.gamma.to_string()),
            ("preferences.psi", pr.psi.to_string()),
            ("preferences.leisure", pr.leisure.to_string()),
            ("preferences.alpha", pr.alpha.to_string()),
            ("preferences.habit_speed", pr.habit_speed.to_string()),
            ("labor.wage", l.wage.to_string()),
            ("labor.max_labor", l.max_labor.to_string()),
            ("annuity_rate", self.params.annuity_rate.to_string()),
            ("effective_rate", self.params.effective_rate.to_string()),
        ]
    }

    /// CSV rendering: `# key=value` metadata lines, the header, one row per node.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.metadata() {
            let _ = writeln!(out, "# {k}={v}");
        }
        out.push_str(CSV_HEADER);
        out.push('\n');
        for i in 0..self.y.len() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                self.y[i],
                self.region[i].as_str(),
                self.kappa[i],
                self.b[i],
                self.p[i],
                self.p[i] * self.y[i]
            );
        }
        out
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(self.to_csv_string().as_bytes())?;
        Ok(())
    }

    pub fn read_csv<R: io::Read>(reader: R) -> Result<Self> {
        let mut meta = std::collections::HashMap::new();
        let mut rows = Vec::new();
        let mut seen_header = false;
        for (lineno, line) in BufReader::new(reader).lines().enumerate() {
            let line = line?;
            let bad = |what: &str| Error::ConfigError(format!("policy CSV line {}: {what}", lineno + 1));
            if let Some(rest) = line.strip_prefix('#') {
                let (k, v) = rest
                    .trim()
                    .split_once('=')
                    .ok_or_else(|| bad("metadata must be `# key=value`"))?;
                meta.insert(k.to_string(), v.to_string());
            } else if !seen_header {
                if line != CSV_HEADER {
                    return Err(bad("unexpected header"));
                }
                seen_header = true;
            } else if !line.is_empty() {
                let cols: Vec<&str> = line.split(',').collect();
                if cols.len() != 6 {
                    return Err(bad("expected 6 columns"));
                }
                let num = |s: &str| s.parse::<f64>().map_err(|_| bad("bad number"));
                rows.push((
                    num(cols[0])?,
                    Region::parse(cols[1])?,
                    num(cols[2])?,
                    num(cols[3])?,
                    num(cols[4])?,
                ));
            }
        }
        if rows.len() < 2 {
            return Err(Error::ConfigError("policy CSV has fewer than two rows".into()));
        }
        let get = |key: &str| -> Result<f64> {
            meta.get(key)
                .ok_or_else(|| Error::ConfigError(format!("policy CSV lacks `{key}`")))?
                .parse()
                .map_err(|_| Error::ConfigError(format!("policy CSV `{key}` is not a number")))
        };
        let get_opt = |key: &str| -> Result<Option<f64>> {
            match meta.get(key).map(String::as_str) {
                Some("none") => Ok(None),
                _ => get(key).map(Some),
            }
        };
        let params = ModelParams {
            market: crate::model::MarketParams {
                r: get("market.r")?,
                mu: get("market.mu")?,
                sigma: get("market.sigma")?,
            },
            preferences: crate::model::PreferenceParams {
                beta: get("preferences.beta")?,
                gamma: get("preferences.gamma")?,
                psi: get("preferences.psi")?,
                leisure: get("preferences.leisure")?,
                alpha: get("preferences.alpha")?,
                habit_speed: get("preferences.habit_speed")?,
            },
            labor: crate::model::LaborParams {
                wage: get("labor.wage")?,
                max_labor: get("labor.max_labor")?,
            },
            annuity_rate: get("annuity_rate")?,
            effective_rate: get("effective_rate")?,
        };
        Ok(Self {
            y: rows.iter().map(|r| r.0).collect(),
            region: rows.iter().map(|r| r.1).collect(),
            kappa: rows.iter().map(|r| r.2).collect(),
            b: rows.iter().map(|r| r.3).collect(),
            p: rows.iter().map(|r| r.4).collect(),
            y_tilde: get_opt("y_tilde")?,
            y_star: get_opt("y_star")?,
            params,
            age: get("age")?,
            eta: get("eta")?,
        })
    }

    pub fn to_json_string(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::NumericalFailure(e.to_string()))
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::ConfigError(format!("policy JSON: {e}")))
    }

    /// Write the table to `path`.
    pub fn export(&self, path: &Path, format: ExportFormat) -> Result<()> {
        let body = match format {
            ExportFormat::Csv => self.to_csv_string(),
            ExportFormat::Json => self.to_json_string()? + "\n",
        };
        fs::write(path, body)?;
        Ok(())
    }

    /// Read a table written by [`export`](Self::export); the format follows
    /// the file extension (`.json`, anything else is CSV).
    pub fn import(path: &Path) -> Result<Self> {
        let is_json = path.extension().is_some_and(|e| e == "json");
        if is_json {
            Self::from_json_str(&fs::read_to_string(path)?)
        } else {
            Self::read_csv(fs::File::open(path)?)
        }
    }
}
