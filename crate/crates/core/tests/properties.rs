//! Structural properties of the augmented systems and of completed
//! schedules on the bundled examples.

mod common;

use common::*;

#[test]
fn jacobian_matches_finite_differences_quad2d() {
    jacobian_check("quad2d", Some("default"), "u+-", 0.5, 100).assert();
    jacobian_check("quad2d", Some("psi2"), "u--", 0.5, 100).assert();
}

#[test]
fn jacobian_matches_finite_differences_doedel() {
    jacobian_check("doedel", Some("furtherexpanded"), "trivial", 0.05, 100).assert();
}

#[test]
fn jacobian_matches_finite_differences_pendulum() {
    for v in ["unconstrained", "input", "output"] {
        jacobian_check("pendulum", Some(v), "forward", 0.05, 100).assert();
    }
}

#[test]
fn secondary_branch_keeps_unknowns_at_the_branch_point() {
    secondary_invariance(&run_preset("quad2d", "u--")).assert();
    secondary_invariance(&run_preset("doedel", "feasible")).assert();
}

#[test]
fn trivial_multiplier_folds_are_rank_drops() {
    for s in ["u+-", "u--"] {
        trivial_fold_rank_drop(&run_preset("quad2d", s)).assert();
    }
    trivial_fold_rank_drop(&run_preset("doedel", "feasible")).assert();
}

#[test]
fn quad2d_schedules_take_d_plus_one_runs_and_end_at_kkt_points() {
    let mut endpoints = Vec::new();
    for s in QUAD2D {
        let f = run_preset("quad2d", s);
        run_count(&f).assert();
        endpoint_kkt(&f).assert();
        let z = f.endpoint();
        endpoints.push((s, [z.u[0], z.u[1]]));
    }
    grid_oracle(&endpoints).assert();
}

#[test]
fn doedel_schedules_take_d_plus_one_runs_and_end_at_kkt_points() {
    for s in ["feasible", "infeasible"] {
        let f = run_preset("doedel", s);
        run_count(&f).assert();
        endpoint_kkt(&f).assert();
    }
}

#[test]
fn pendulum_schedules_take_d_plus_one_runs_and_end_at_kkt_points() {
    for s in ["unconstrained", "input", "output"] {
        let f = run_preset("pendulum", s);
        run_count(&f).assert();
        endpoint_kkt(&f).assert();
        trivial_fold_rank_drop(&f).assert();
    }
}

#[test]
fn grid_oracle_finds_the_analytic_minimum() {
    let (u, v) = grid_minimum();
    assert!(
        (u[0] - 5.0 / 3.0).abs() <= 1e-4 && (u[1] - 1.0 / 3.0).abs() <= 1e-4,
        "{u:?}"
    );
    assert!((v - 1.0).abs() <= 1e-4);
}
