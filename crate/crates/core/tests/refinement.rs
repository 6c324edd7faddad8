//! Grid refinement at the baseline parameters, and the policy export
//! surviving a round trip.

use hjbvi_core::policy::PolicyTable;
use hjbvi_core::{solve_vi, Grid, ModelParams, SolveResult, SolverConfig};

fn solve(nodes: usize) -> SolveResult {
    let grid = Grid {
        nodes,
        ..Grid::default()
    };
    solve_vi(&grid, &ModelParams::baseline(), &SolverConfig::default()).unwrap()
}

#[test]
fn value_and_threshold_settle_under_refinement() {
    let coarse = solve(500);
    let mid = solve(1000);
    let fine = solve(2000);

    for y in [0.5, 1.0, 5.0, 20.0] {
        let (a, b, c) = (coarse.value_at(y), mid.value_at(y), fine.value_at(y));
        let d1 = (a - b).abs();
        let d2 = (b - c).abs();
        assert!(
            d2 <= d1 + 1e-9 * c.abs(),
            "y = {y}: successive differences {d1:e} then {d2:e}"
        );
        assert!(d2 / c.abs() < 1e-3, "y = {y}: rel change {}", d2 / c.abs());
    }

    let stars: Vec<f64> = [&coarse, &mid, &fine]
        .iter()
        .map(|r| r.thresholds.y_star.expect("baseline has a stopping region"))
        .collect();
    let spread = stars.iter().fold(0.0f64, |m, s| m.max((s - stars[2]).abs()));
    assert!(spread / stars[2] < 0.02, "y* across grids: {stars:?}");
}

#[test]
fn converged_solve_has_small_residual_off_the_boundary() {
    let r = solve(1000);
    let n = r.y.len();
    let stop = r.stop_index().unwrap_or(n);
    let worst = r.diagnostics.complementarity[1..stop.saturating_sub(1)]
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(worst < 1e-6, "complementarity {worst:e}");
    assert!(r.diagnostics.last_update <= r.config.tolerance);
}

#[test]
fn policy_csv_and_json_round_trip() {
    let r = solve(300);
    let table = PolicyTable::from_solve(&r, 60.0);

    let csv = table.to_csv_string();
    let back = PolicyTable::read_csv(csv.as_bytes()).unwrap();
    assert_eq!(back.y, table.y);
    assert_eq!(back.kappa, table.kappa);
    assert_eq!(back.b, table.b);
    assert_eq!(back.p, table.p);
    assert_eq!(back.region, table.region);
    assert_eq!(back.y_star, table.y_star);
    assert_eq!(back.eta, table.eta);
    assert_eq!(back.to_csv_string(), csv);

    let json = table.to_json_string().unwrap();
    assert_eq!(PolicyTable::from_json_str(&json).unwrap(), table);
}
