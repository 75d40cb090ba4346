use nalgebra::{DMatrix, DVector};

use super::*;
use crate::complementarity::fb_chi_grad;

fn quad() -> StagedProblem {
    let mut p = StagedProblem::new("quad", Form::FurtherExpanded);
    p.add_stage(Stage::zero("u", 0, vec![], 2, |_| DVector::zeros(0)))
        .unwrap();
    p.add_stage(
        Stage::monitor("psi1", 1, vec![0, 1], |x| {
            DVector::from_element(1, (x[0] - 2.0).powi(2) + 2.0 * (x[1] - 1.0).powi(2))
        })
        .with_jacobian(|x| {
            DMatrix::from_row_slice(1, 2, &[2.0 * (x[0] - 2.0), 4.0 * (x[1] - 1.0)])
        }),
    )
    .unwrap();
    p.add_stage(
        Stage::inequality("g", 2, vec![0, 1], |x| {
            DVector::from_vec(vec![x[0] + 4.0 * x[1] - 3.0, -x[0] + x[1]])
        })
        .with_jacobian(|_| DMatrix::from_row_slice(2, 2, &[1.0, 4.0, -1.0, 1.0])),
    )
    .unwrap();
    p
}

fn point(
    u: [f64; 2],
    eta: f64,
    sigma: [f64; 2],
    mu: f64,
    nu: f64,
    xi: [f64; 2],
    kappa: [f64; 2],
) -> AugmentedPoint {
    AugmentedPoint {
        u: u.to_vec(),
        lambda: vec![],
        eta: vec![eta],
        sigma: sigma.to_vec(),
        mu: vec![mu],
        nu: vec![nu],
        xi: xi.to_vec(),
        kappa: kappa.to_vec(),
    }
}

#[test]
fn counts_and_names() {
    let p = quad();
    assert_eq!(
        (p.n_u(), p.n_phi(), p.n_monitors(), p.n_ineq()),
        (2, 0, 1, 2)
    );
    assert_eq!(p.n_rows(), 8);
    assert_eq!(
        p.param_names(),
        vec!["mu_psi1", "nu_psi1", "xi_g1", "xi_g2", "kappa_g1", "kappa_g2"]
    );
    // u, η, σ (no λ: Φ is empty), then μ, ν, ξ, κ
    assert_eq!(p.n_unknowns(), 5 + 1 + 1 + 2 + 2);
}

#[test]
fn residual_at_initial_root() {
    let p = quad();
    // Ψ₁(3, 1) = 1
    let z = point(
        [3.0, 1.0],
        0.0,
        [0.0, 0.0],
        1.0,
        0.0,
        [4.0, -2.0],
        [8.0, 0.0],
    );
    assert_eq!(p.trivial_point(&[3.0, 1.0]).unwrap(), z);
    let f = p.assemble_residual(&z).unwrap();
    assert_eq!(f.amax(), 0.0);

    let mut z0 = z.clone();
    z0.mu[0] = 0.0;
    let f = p.assemble_residual(&z0).unwrap();
    let nonzero: Vec<_> = f.iter().enumerate().filter(|(_, v)| **v != 0.0).collect();
    assert_eq!(nonzero, vec![(0, &1.0)]);
}

#[test]
fn residual_at_optimum() {
    let p = quad();
    let z = point(
        [5.0 / 3.0, 1.0 / 3.0],
        1.0,
        [2.0 / 3.0, 0.0],
        1.0,
        1.0,
        [0.0, -4.0 / 3.0],
        [0.0, 0.0],
    );
    let f = p.assemble_residual(&z).unwrap();
    assert!(f.amax() < 1e-14, "{f}");
}

#[test]
fn jacobian_shape_for_first_run() {
    let p = quad();
    let z = p.trivial_point(&[3.0, 1.0]).unwrap();
    let ps = p
        .param_state()
        .restrict(
            &[("kappa_g1", 8.0), ("kappa_g2", 0.0)],
            &["mu_psi1", "nu_psi1"],
        )
        .unwrap();
    let (j, meta) = p.assemble_jacobian(&z, &ps).unwrap();
    // u:2, η:1, σ:2 plus μ₁, ν₁, ξ₁, ξ₂
    assert_eq!(j.shape(), (8, 9));
    assert!(meta.singular_ncp.is_empty());
    assert_eq!(p.manifold_dim(&ps).unwrap(), 1);
}

#[test]
fn ncp_row_chain_rule_at_optimum() {
    let p = quad();
    let z = point(
        [5.0 / 3.0, 1.0 / 3.0],
        1.0,
        [2.0 / 3.0, 0.0],
        1.0,
        1.0,
        [0.0, -4.0 / 3.0],
        [0.0, 0.0],
    );
    let ps = p
        .param_state()
        .restrict(
            &[("nu_psi1", 1.0), ("kappa_g2", 0.0)],
            &["mu_psi1", "kappa_g1"],
        )
        .unwrap();
    let (j, _) = p.assemble_jacobian(&z, &ps).unwrap();
    let g = fb_chi_grad(2.0 / 3.0, 0.0);
    assert_eq!(g.d_a, 0.0);
    // row 6 is the first NCP row; columns: x, y, η, σ₁, σ₂, μ₁, κ₁, ξ₁, ξ₂
    assert_eq!(j[(6, 3)], 0.0);
    assert!((j[(6, 0)] - (-g.d_b * 1.0)).abs() < 1e-15);
    assert!((j[(6, 1)] - (-g.d_b * 4.0)).abs() < 1e-15);
    assert_eq!(j[(6, 6)], -1.0);
}

#[test]
fn jacobian_matches_finite_differences() {
    let p = quad();
    let ps = p
        .param_state()
        .restrict(&[("kappa_g2", 0.0)], &["mu_psi1", "kappa_g1"])
        .unwrap();
    let z = point(
        [0.7, -0.4],
        0.3,
        [0.5, -0.2],
        1.1,
        0.4,
        [0.2, 0.1],
        [1.5, 0.0],
    );
    let (j, _) = p.assemble_jacobian(&z, &ps).unwrap();
    let x = p.pack(&z, &ps).unwrap();
    let f = |x: &[f64]| {
        let zz = p.unpack(&DVector::from_column_slice(x), &ps, &z).unwrap();
        p.assemble_residual(&zz).unwrap()
    };
    let jfd = fd_jacobian(f, x.as_slice(), p.n_rows());
    assert!((j - jfd).amax() < 1e-6);
}

#[test]
fn pack_unpack_round_trip() {
    let p = quad();
    let ps = p
        .param_state()
        .restrict(&[("kappa_g1", 8.0)], &["nu_psi1"])
        .unwrap();
    let z = point(
        [0.7, -0.4],
        0.3,
        [0.5, -0.2],
        1.1,
        0.4,
        [0.2, 0.1],
        [8.0, 0.25],
    );
    let x = p.pack(&z, &ps).unwrap();
    assert_eq!(x.len(), 5 + 5);
    assert_eq!(x[5], 0.4);
    let back = p
        .unpack(&x, &ps, &p.trivial_point(&[0.0, 0.0]).unwrap())
        .unwrap();
    assert_eq!(back, z);
}

#[test]
fn activation_replaces_ncp_row_and_drops_kappa() {
    let p = quad();
    let a = p.activate_constraint(0).unwrap();
    assert_eq!(
        a.param_names(),
        vec!["mu_psi1", "nu_psi1", "xi_g1", "xi_g2", "kappa_g2"]
    );
    let z = point(
        [-2.6, 1.4],
        0.2,
        [0.3, 0.0],
        1.0,
        0.2,
        [0.0, 4.0],
        [0.0, 0.0],
    );
    let f = a.assemble_residual(&z).unwrap();
    assert!((f[6] - (-2.6 + 5.6 - 3.0)).abs() < 1e-15);

    let back = a.deactivate_constraint(0).unwrap();
    let f0 = p.assemble_residual(&z).unwrap();
    let f1 = back.assemble_residual(&z).unwrap();
    assert_eq!(f0.as_slice(), f1.as_slice());
}

#[test]
fn singular_ncp_flag() {
    let p = quad();
    // (σ₁, −G₁) = (0, 0) at x + 4y = 3
    let z = point(
        [7.0 / 5.0, 2.0 / 5.0],
        0.0,
        [0.0, 0.0],
        0.0,
        0.0,
        [0.0, -1.0],
        [0.0, 0.0],
    );
    let ps = p.param_state();
    let (_, meta) = p.assemble_jacobian(&z, &ps).unwrap();
    assert_eq!(meta.singular_ncp, vec![0]);
}

#[test]
fn stage_dependency_checks() {
    let mut p = StagedProblem::new("bad", Form::FurtherExpanded);
    let e = p.add_stage(Stage::monitor("m", 1, vec![0], |x| {
        DVector::from_element(1, x[0])
    }));
    assert!(matches!(e, Err(crate::Error::Stage { .. })));
    p.add_stage(Stage::zero("u", 0, vec![], 1, |_| DVector::zeros(0)))
        .unwrap();
    let e = p.add_stage(Stage::zero("u", 0, vec![], 1, |_| DVector::zeros(0)));
    assert!(e.is_err());
    let mut o = StagedProblem::new("orig", Form::Original);
    o.add_stage(Stage::zero("u", 0, vec![], 1, |_| DVector::zeros(0)))
        .unwrap();
    assert!(o
        .add_stage(Stage::inequality("g", 1, vec![0], |x| {
            DVector::from_element(1, x[0])
        }))
        .is_err());
}
