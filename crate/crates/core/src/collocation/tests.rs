use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use super::*;

fn oscillator(n: usize, m: usize) -> Discretization {
    // x' = v, v' = −x, x(0) = 0, x(π/2) = 1
    let spec = BvpSpec::new(
        2,
        0,
        |_, x, _| DVector::from_vec(vec![x[1], -x[0]]),
        2,
        |a, b, _| DVector::from_vec(vec![a[0], b[0] - 1.0]),
    )
    .with_field_jacobian(|_, _, _| DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]))
    .with_integrand(Integrand::monitor("x2", |_, x, _| x[0] * x[0]));
    Discretization::new(spec, CollocationMesh::new(n, m, 0.0, FRAC_PI_2).unwrap()).unwrap()
}

fn solve_oscillator(n: usize, m: usize) -> (Discretization, Vec<f64>) {
    let d = oscillator(n, m);
    let guess = vec![0.0; d.n_states()];
    let u = d.solve_states(&guess, &[]).unwrap();
    (d, u)
}

fn max_node_error(d: &Discretization, u: &[f64]) -> f64 {
    d.mesh
        .base_times()
        .iter()
        .enumerate()
        .map(|(b, &t)| {
            (u[2 * b] - t.sin())
                .abs()
                .max((u[2 * b + 1] - t.cos()).abs())
        })
        .fold(0.0, f64::max)
}

fn nonlinear(analytic: bool) -> Discretization {
    let field = |_: f64, x: &[f64], p: &[f64]| {
        DVector::from_vec(vec![
            x[1],
            -p[0] * (x[0] + p[1] * x[0] * x[0] + p[2] * x[0].powi(4)).exp(),
        ])
    };
    let mut spec = BvpSpec::new(2, 3, field, 2, |a, b, _| {
        DVector::from_vec(vec![a[0], b[0]])
    });
    let mut j = Integrand::monitor("j", |_, x, p| (x[0] - 1.0).powi(2) + 0.1 * p[0] * p[1]);
    let mut g = Integrand::inequality("g", |t, x, _| 0.5 - x[0] * x[0] * t);
    if analytic {
        spec = spec
            .with_bc_jacobian(|_, _, _| {
                DMatrix::from_row_slice(
                    2,
                    7,
                    &[
                        1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0,
                    ],
                )
            })
            .with_field_jacobian(|_, x, p| {
                let e = (x[0] + p[1] * x[0] * x[0] + p[2] * x[0].powi(4)).exp();
                let de = 1.0 + 2.0 * p[1] * x[0] + 4.0 * p[2] * x[0].powi(3);
                DMatrix::from_row_slice(
                    2,
                    5,
                    &[
                        0.0,
                        1.0,
                        0.0,
                        0.0,
                        0.0,
                        -p[0] * e * de,
                        0.0,
                        -e,
                        -p[0] * e * x[0] * x[0],
                        -p[0] * e * x[0].powi(4),
                    ],
                )
            });
        j = j.with_gradient(|_, x, p| {
            DVector::from_vec(vec![2.0 * (x[0] - 1.0), 0.0, 0.1 * p[1], 0.1 * p[0], 0.0])
        });
        g = g.with_gradient(|t, x, _| DVector::from_vec(vec![-2.0 * x[0] * t, 0.0, 0.0, 0.0, 0.0]));
    }
    spec = spec.with_integrand(j).with_integrand(g);
    Discretization::new(spec, CollocationMesh::new(3, 3, 0.0, 1.0).unwrap()).unwrap()
}

fn sample_point(d: &Discretization) -> Vec<f64> {
    (0..d.n_unknowns())
        .map(|k| 0.3 * ((k as f64) * 0.7).sin())
        .collect()
}

#[test]
fn gauss_nodes_two_point() {
    let (x, w) = gauss_legendre(2);
    let off = 0.5 / 3f64.sqrt();
    assert!((x[0] - (0.5 - off)).abs() < 1e-15 && (x[1] - (0.5 + off)).abs() < 1e-15);
    assert!((w[0] - 0.5).abs() < 1e-15 && (w[1] - 0.5).abs() < 1e-15);
}

#[test]
fn weights_sum_to_interval_length() {
    for (n, m) in [(1, 1), (7, 3), (20, 4), (13, 7)] {
        let mesh = CollocationMesh::new(n, m, -0.5, 2.25).unwrap();
        let s: f64 = mesh.weights.iter().sum();
        assert!((s - 2.75).abs() < 1e-12, "n = {n}, m = {m}");
    }
}

#[test]
fn cubic_quadrature_is_exact() {
    for n in [1, 2, 5, 17] {
        let mesh = CollocationMesh::new(n, 2, 0.0, 1.0).unwrap();
        assert!((mesh.quad(|t| t.powi(3)) - 0.25).abs() < 1e-15);
    }
    let mesh = CollocationMesh::new(3, 4, 0.0, 1.0).unwrap();
    assert!((mesh.quad(|t| t.powi(7)) - 0.125).abs() < 1e-15);
}

#[test]
fn bad_mesh() {
    assert!(CollocationMesh::new(0, 3, 0.0, 1.0).is_err());
    assert!(CollocationMesh::new(3, 0, 0.0, 1.0).is_err());
    assert!(CollocationMesh::new(3, 3, 1.0, 1.0).is_err());
}

#[test]
fn dimension_bookkeeping() {
    let d = oscillator(10, 4);
    assert_eq!(d.n_unknowns(), 10 * 5 * 2);
    assert_eq!(d.n_rows(), 10 * 4 * 2 + 9 * 2 + 2);
    let d = nonlinear(false);
    assert_eq!(d.n_unknowns(), 3 * 4 * 2 + 3);
    assert_eq!(d.stages("bvp").unwrap().len(), 3);
}

#[test]
fn sine_solution() {
    let (d, u) = solve_oscillator(10, 4);
    let err = max_node_error(&d, &u);
    assert!(err <= 1e-8, "max node error {err:e}");
    let x_mid = d.state_at(&u, 0.7);
    assert!((x_mid[0] - 0.7f64.sin()).abs() < 1e-8);
}

#[test]
fn quadrature_of_sine_squared() {
    let (d, u) = solve_oscillator(10, 4);
    let v = d.integral(&d.spec.integrands[0], &u);
    assert!((v - FRAC_PI_4).abs() <= 1e-8, "{v}");
}

#[test]
fn refinement_order() {
    let (d1, u1) = solve_oscillator(4, 3);
    let (d2, u2) = solve_oscillator(8, 3);
    let ratio = max_node_error(&d1, &u1) / max_node_error(&d2, &u2);
    assert!(ratio >= 8.0, "error ratio {ratio}");
}

#[test]
fn jacobian_matches_finite_differences() {
    for analytic in [true, false] {
        let d = nonlinear(analytic);
        let u = sample_point(&d);
        let j = d.jacobian(&u);
        let fd = fd_jacobian(|y| d.residual(y), &u, d.n_rows());
        assert!((j - fd).amax() < 1e-7);
    }
}

#[test]
fn adjoint_hessian_matches_finite_differences() {
    let exact = nonlinear(true);
    let u = sample_point(&exact);
    let w: Vec<f64> = (0..exact.n_rows())
        .map(|k| ((k as f64) * 1.3).cos())
        .collect();
    let wv = DVector::from_column_slice(&w);
    let fd = fd_jacobian(
        |y| exact.jacobian(y).transpose() * &wv,
        &u,
        exact.n_unknowns(),
    );
    for analytic in [true, false] {
        let h = nonlinear(analytic).adjoint_hessian(&u, &w);
        let err = (&h - &fd).amax();
        assert!(err < 1e-5, "analytic = {analytic}: {err}");
    }
}

#[test]
fn integral_derivatives_match_finite_differences() {
    let exact = nonlinear(true);
    let u = sample_point(&exact);
    for analytic in [true, false] {
        let d = nonlinear(analytic);
        for (g, ge) in d.spec.integrands.iter().zip(&exact.spec.integrands) {
            let gr = d.integral_gradient(g, &u);
            let fd = fd_jacobian(|y| DVector::from_element(1, d.integral(g, y)), &u, 1);
            assert!((gr.transpose() - fd).amax() < 1e-7);
            let h = d.integral_hessian(g, &u, 0.7);
            let fd = fd_jacobian(|y| exact.integral_gradient(ge, y) * 0.7, &u, d.n_unknowns());
            let err = (h - fd).amax();
            assert!(err < 1e-5, "analytic = {analytic}: {err}");
        }
    }
}

#[test]
fn stage_kinds() {
    let d = nonlinear(false);
    let st = d.stages("bvp").unwrap();
    assert_eq!(st[0].kind, StageKind::Zero);
    assert_eq!(st[0].new_unknowns, d.n_unknowns());
    assert_eq!(st[1].kind, StageKind::Monitor);
    assert_eq!(st[2].kind, StageKind::Inequality);
    assert_eq!(st[2].deps.len(), d.n_unknowns());
    let pm = d.parameter_monitor("p2", 1);
    assert_eq!(pm.deps, vec![d.p_index(1)]);
}

#[test]
fn harmonic_oscillator_period() {
    let steps = (2.0 * PI / 0.01).round() as usize;
    let tr = integrate_ivp(
        |_, x, _| DVector::from_vec(vec![x[1], -x[0]]),
        &[1.0, 0.0],
        &[],
        0.0,
        2.0 * PI,
        steps,
    )
    .unwrap();
    let last = tr.x.last().unwrap();
    assert!((last[0] - 1.0).abs() < 1e-6 && last[1].abs() < 1e-6);
    assert_eq!(*tr.t.last().unwrap(), 2.0 * PI);
}

#[test]
fn zero_field_is_constant() {
    let tr = integrate_ivp(
        |_, x, _| DVector::zeros(x.len()),
        &[0.3, -2.0],
        &[],
        0.0,
        1.0,
        10,
    )
    .unwrap();
    assert!(tr.x.iter().all(|x| x == &vec![0.3, -2.0]));
    assert_eq!(tr.at(0.55), vec![0.3, -2.0]);
}

#[test]
fn blow_up_is_an_error() {
    let r = integrate_ivp(
        |_, x, _| DVector::from_vec(vec![x[0] * x[0]]),
        &[1.0],
        &[],
        0.0,
        2.0,
        50,
    );
    assert!(matches!(r, Err(Error::Domain(_))));
    assert!(integrate_ivp(|_, x, _| DVector::zeros(x.len()), &[1.0], &[], 0.0, 1.0, 0).is_err());
}

#[test]
fn resampled_guess_feeds_state_solve() {
    let d = oscillator(10, 4);
    let tr = integrate_ivp(
        |_, x, _| DVector::from_vec(vec![x[1], -x[0]]),
        &[0.0, 1.0],
        &[],
        0.0,
        FRAC_PI_2,
        200,
    )
    .unwrap();
    let guess = tr.resample(&d, &[]);
    assert!(d.residual(&guess).amax() < 1e-3);
    let u = d.solve_states(&guess, &[]).unwrap();
    assert!(max_node_error(&d, &u) < 1e-8);
}

#[test]
fn chebyshev_examples() {
    let mut p = [0.0; 10];
    p[0] = 1.0;
    for t in [0.0, 0.3, 1.7, 2.0] {
        assert_eq!(chebyshev_control(&p, t, 0.0, 2.0).unwrap(), 1.0);
    }
    let mut p = [0.0; 10];
    p[2] = 1.0;
    assert_eq!(chebyshev_control(&p, 1.0, 0.0, 2.0).unwrap(), -1.0);
    assert_eq!(chebyshev_control(&[0.0; 10], 0.4, 0.0, 2.0).unwrap(), 0.0);
    assert!(chebyshev_control(&p, 2.5, 0.0, 2.0).is_err());
    let b = chebyshev_basis(5, 0.3);
    for (k, v) in b.iter().enumerate() {
        assert!((v - (k as f64 * 0.3f64.acos()).cos()).abs() < 1e-14);
    }
}
