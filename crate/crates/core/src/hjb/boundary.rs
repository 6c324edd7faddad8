use serde::{Deserialize, Serialize};

use super::{ObstacleMode, Region, SolveResult};
use crate::error::{Error, Result};
use crate::model::{obstacle_unchecked, ModelParams};
use crate::numerics::{derivative_fd, find_root_bracketed, DerivativeOrder};

/// Free boundaries of a solved problem.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Thresholds {
    /// First node where labor sits at its cap; absent when the cap never binds.
    pub y_tilde: Option<f64>,
    /// First stopped node.
    pub y_star: Option<f64>,
    /// Crossing of the extrapolated continuation value with `G` between the
    /// last continuation node and `y_star`, when one exists.
    pub y_star_refined: Option<f64>,
}

/// Residuals of the free-boundary conditions, measured on the discrete solution.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BoundaryDiagnostics {
    /// `|V(y*) − G(y*)|`.
    pub value_matching: Option<f64>,
    /// `|V′(y*⁻) − G′(y*)|`.
    pub smooth_pasting: Option<f64>,
    /// `|V″(y*⁻) − G″(y*)|`.
    pub super_contact: Option<f64>,
    /// One-sided mismatches of `V`, `V′`, `V″` at `ỹ`.
    pub y_tilde_mismatch: Option<[f64; 3]>,
}

/// Lagrange interpolant through the given nodes.
fn lagrange(xs: &[f64], vs: &[f64]) -> impl Fn(f64) -> f64 {
    let xs = xs.to_vec();
    let vs = vs.to_vec();
    move |x| {
        let mut acc = 0.0;
        for (i, (&xi, &vi)) in xs.iter().zip(&vs).enumerate() {
            let mut basis = 1.0;
            for (j, &xj) in xs.iter().enumerate() {
                if j != i {
                    basis *= (x - xj) / (xi - xj);
                }
            }
            acc += vi * basis;
        }
        acc
    }
}

/// `[f, f′, f″]` at `x`; the step is a fraction of the local node spacing.
fn jet<F: Fn(f64) -> f64>(f: F, x: f64, spacing: f64) -> Result<[f64; 3]> {
    let h1 = Some(1e-3 * spacing);
    let h2 = Some(1e-2 * spacing);
    Ok([
        f(x),
        derivative_fd(&f, x, DerivativeOrder::First, h1)?,
        derivative_fd(&f, x, DerivativeOrder::Second, h2)?,
    ])
}

/// Locate `ỹ` and `y*` from the region labels.
pub fn extract_thresholds(result: &SolveResult) -> Result<Thresholds> {
    let y_tilde = result
        .region
        .iter()
        .position(|r| *r == Region::Corner)
        .map(|i| result.y[i]);
    let Some(i) = result.stop_index() else {
        if result.config.obstacle == ObstacleMode::Disabled {
            return Ok(Thresholds {
                y_tilde,
                ..Default::default()
            });
        }
        return Err(Error::GridTooSmall(
            "no stopped node on the grid; raise y_max".into(),
        ));
    };
    let y_star = result.y[i];
    let y_star_refined = if i >= 2 {
        let lo = i.saturating_sub(4);
        let cont = lagrange(&result.y[lo..i], &result.value[lo..i]);
        let gap = |y: f64| cont(y) - obstacle_unchecked(y, &result.params).g;
        let (a, b) = (result.y[i - 1], y_star);
        if gap(a) > 0.0 && gap(b) < 0.0 {
            Some(find_root_bracketed(gap, a, b, 1e-12 * b)?)
        } else {
            None
        }
    } else {
        None
    };
    Ok(Thresholds {
        y_tilde,
        y_star: Some(y_star),
        y_star_refined,
    })
}

/// Value matching, smooth pasting and super-contact at `y*`, and the
/// `C²` mismatch at `ỹ`, from cubic (resp. quadratic) fits on the
/// continuation side of each boundary.
pub fn boundary_diagnostics(result: &SolveResult, params: &ModelParams) -> Result<BoundaryDiagnostics> {
    let y = &result.y;
    let v = &result.value;
    let mut out = BoundaryDiagnostics::default();
    if let Some(i) = result.stop_index() {
        let ys = y[i];
        let g = obstacle_unchecked(ys, params);
        out.value_matching = Some((v[i] - g.g).abs());
        if i >= 4 {
            // Continuation branch only: the cubic through the last four
            // continuation nodes, extrapolated to y*.
            let fit = lagrange(&y[i - 4..i], &v[i - 4..i]);
            let [_, d1, d2] = jet(fit, ys, ys - y[i - 1])?;
            out.smooth_pasting = Some((d1 - g.dg).abs());
            out.super_contact = Some((d2 - g.d2g).abs());
        }
    }
    if let Some(j) = result.region.iter().position(|r| *r == Region::Corner) {
        let end = result.stop_index().unwrap_or(y.len());
        if j >= 3 && j + 3 <= end {
            let yt = y[j];
            let spacing = y[j] - y[j - 1];
            let left = jet(lagrange(&y[j - 3..j], &v[j - 3..j]), yt, spacing)?;
            let right = jet(lagrange(&y[j..j + 3], &v[j..j + 3]), yt, spacing)?;
            out.y_tilde_mismatch = Some([
                (left[0] - right[0]).abs(),
                (left[1] - right[1]).abs(),
                (left[2] - right[2]).abs(),
            ]);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hjb::{SolveDiagnostics, SolverConfig};

    fn synthetic(region: Vec<Region>, obstacle: ObstacleMode) -> SolveResult {
        let params = ModelParams::baseline();
        let y: Vec<f64> = (1..=region.len()).map(|i| i as f64).collect();
        let g: Vec<f64> = y.iter().map(|&x| obstacle_unchecked(x, &params).g).collect();
        let n = y.len();
        SolveResult {
            value: g.clone(),
            obstacle: g,
            p: vec![0.0; n],
            kappa: vec![1.0; n],
            b: vec![0.0; n],
            y,
            region,
            thresholds: Thresholds::default(),
            diagnostics: SolveDiagnostics::default(),
            params,
            config: SolverConfig {
                obstacle,
                ..Default::default()
            },
        }
    }

    #[test]
    fn label_scan_finds_both_thresholds() {
        use Region::*;
        let r = synthetic(
            vec![Interior, Interior, Corner, Corner, Stopped],
            ObstacleMode::Projection,
        );
        let t = extract_thresholds(&r).unwrap();
        assert_eq!(t.y_tilde, Some(3.0));
        assert_eq!(t.y_star, Some(5.0));
    }

    #[test]
    fn missing_stop_region() {
        let labels = vec![Region::Interior; 4];
        let r = synthetic(labels.clone(), ObstacleMode::Projection);
        assert!(matches!(extract_thresholds(&r), Err(Error::GridTooSmall(_))));
        let r = synthetic(labels, ObstacleMode::Disabled);
        let t = extract_thresholds(&r).unwrap();
        assert_eq!(t, Thresholds::default());
        let d = boundary_diagnostics(&r, &r.params).unwrap();
        assert_eq!(d, BoundaryDiagnostics::default());
    }

    #[test]
    fn lagrange_reproduces_cubic() {
        let xs = [0.5, 1.0, 2.0, 3.5];
        let f = |x: f64| x * x * x - 2.0 * x + 1.0;
        let vs: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
        let p = lagrange(&xs, &vs);
        let [v, d1, d2] = jet(p, 2.5, 1.0).unwrap();
        assert!((v - f(2.5)).abs() < 1e-12);
        assert!((d1 - (3.0 * 6.25 - 2.0)).abs() < 1e-6);
        assert!((d2 - 15.0).abs() < 1e-4);
    }
}
