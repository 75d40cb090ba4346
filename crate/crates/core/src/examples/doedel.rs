//! A two-point boundary-value problem with an integral objective and an
//! integral inequality:
//!
//! ```text
//! ẋ₁ = x₂,  ẋ₂ = −p₁ exp(x₁ + p₂x₁² + p₃x₁⁴),  x₁(0) = x₁(1) = 0,
//! J = (p₁² + p₂² + p₃²)/10 + ∫₀¹ (x₁ − 1)² dt,
//! G_int = 0.5 − ∫₀¹ x₁ dt ≤ 0.
//! ```
//!
//! Monitors are `J, p1, p2, p3`; the inequality is labeled `int`.

use nalgebra::{DMatrix, DVector};

use crate::collocation::{BvpSpec, CollocationMesh, Discretization, Integrand};
use crate::continuation::{Bound, Branch, Continuation, Direction, Event, Settings};
use crate::error::{Error, Result};
use crate::staged::{Form, StagedProblem};
use crate::successive_driver::{plan, Schedule};

/// Default mesh: intervals and collocation degree.
pub const MESH_N: usize = 20;
pub const MESH_M: usize = 4;

fn exponent(x: f64, p: &[f64]) -> f64 {
    x + p[1] * x * x + p[2] * x.powi(4)
}

fn spec(with_ineq: bool) -> BvpSpec {
    let mut s = BvpSpec::new(
        2,
        3,
        |_, x, p| DVector::from_vec(vec![x[1], -p[0] * exponent(x[0], p).exp()]),
        2,
        |a, b, _| DVector::from_vec(vec![a[0], b[0]]),
    )
    .with_field_jacobian(|_, x, p| {
        let e = exponent(x[0], p).exp();
        let de = 1.0 + 2.0 * p[1] * x[0] + 4.0 * p[2] * x[0].powi(3);
        let x2 = x[0] * x[0];
        DMatrix::from_row_slice(
            2,
            5,
            &[
                0.0,
                1.0,
                0.0,
                0.0,
                0.0, //
                -p[0] * e * de,
                0.0,
                -e,
                -p[0] * e * x2,
                -p[0] * e * x2 * x2,
            ],
        )
    })
    .with_bc_jacobian(|_, _, _| {
        let mut j = DMatrix::zeros(2, 7);
        j[(0, 0)] = 1.0;
        j[(1, 2)] = 1.0;
        j
    })
    .with_integrand(
        // the algebraic term integrates to itself over [0, 1]
        Integrand::monitor("J", |_, x, p| {
            0.1 * (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]) + (x[0] - 1.0).powi(2)
        })
        .with_gradient(|_, x, p| {
            DVector::from_vec(vec![
                2.0 * (x[0] - 1.0),
                0.0,
                0.2 * p[0],
                0.2 * p[1],
                0.2 * p[2],
            ])
        }),
    );
    if with_ineq {
        s = s.with_integrand(
            Integrand::inequality("int", |_, x, _| 0.5 - x[0])
                .with_gradient(|_, _, _| DVector::from_vec(vec![-1.0, 0.0, 0.0, 0.0, 0.0])),
        );
    }
    s
}

/// Discretization on an `n`-interval mesh of degree `m`.
pub fn discretization(n: usize, m: usize, with_ineq: bool) -> Result<Discretization> {
    Discretization::new(spec(with_ineq), CollocationMesh::new(n, m, 0.0, 1.0)?)
}

/// The problem on the default mesh. `Form::Original` omits the inequality
/// and the adjoint conditions.
pub fn build(form: Form) -> Result<StagedProblem> {
    build_on(form, MESH_N, MESH_M)
}

pub fn build_on(form: Form, n: usize, m: usize) -> Result<StagedProblem> {
    let with_ineq = form == Form::FurtherExpanded;
    let d = discretization(n, m, with_ineq)?;
    let mut p = StagedProblem::new("doedel", form);
    let stages = d.stages("bvp")?;
    let mut stages = stages.into_iter();
    p.add_stage(stages.next().expect("zero stage"))?;
    p.add_stage(stages.next().expect("objective stage"))?;
    for k in 0..3 {
        p.add_stage(d.parameter_monitor(&format!("p{}", k + 1), k))?;
    }
    for s in stages {
        p.add_stage(s)?;
    }
    for k in 0..3 {
        p.name_unknown(&format!("p{}", k + 1), d.p_index(k));
    }
    Ok(p)
}

/// `x ≡ 0` with `p = (0, 0.1, 0)`, an exact root of `Φ`.
pub fn trivial_start(disc: &Discretization) -> Vec<f64> {
    disc.sample(|_| vec![0.0, 0.0], &[0.0, 0.1, 0.0])
}

/// The computational domain.
pub fn domain() -> Vec<Bound> {
    vec![
        Bound::new("mu_p1", -0.2, 3.5),
        Bound::new("mu_p2", -0.2, 1.5),
        Bound::new("mu_p3", -0.2, 1.0),
        Bound::new("mu_J", 0.0, 1.5),
    ]
}

/// Continuation of `Φ = 0` in `p₁` from the trivial start with
/// `p₂ = 0.1, p₃ = 0`, recording folds in `μ_J`.
pub fn preliminary_run() -> Result<(StagedProblem, Branch)> {
    let p = build(Form::Original)?;
    let disc = discretization(MESH_N, MESH_M, false)?;
    let u0 = trivial_start(&disc);
    let z0 = p.trivial_point(&u0)?;
    let ps = p
        .param_state()
        .restrict(&[("mu_p2", 0.1), ("mu_p3", 0.0)], &["mu_p1", "mu_J"])?;
    let settings = Settings {
        max_steps: 400,
        ..Settings::default()
    };
    let branch = Continuation::new(&p, ps)
        .with_settings(settings)
        .with_event(Event::fold("mu_J"))
        .with_bounds(domain())
        .run(&z0, &Direction::Increase("mu_p1".into()))?;
    Ok((p, branch))
}

/// Start for the feasible case: the chart of the preliminary run just
/// before its third fold in `μ_J`. The fold itself is a branch point of the
/// first schedule run, where the tangent is not unique.
pub fn feasible_start() -> Result<Vec<f64>> {
    let (_, branch) = preliminary_run()?;
    let folds: Vec<usize> = branch
        .events_hit
        .iter()
        .filter(|h| h.event.watch == "mu_J")
        .map(|h| h.chart)
        .collect();
    let &fp3 = folds.get(2).ok_or_else(|| {
        Error::Schedule(format!(
            "preliminary run found {} folds, expected 3",
            folds.len()
        ))
    })?;
    Ok(branch.charts[fp3 - 1].z.u.clone())
}

/// `I = {p2, p3}`, no violated inequality; starts next to the third fold.
pub fn feasible_schedule(p: &StagedProblem) -> Result<Schedule> {
    let u0 = feasible_start()?;
    let mut s = plan(p, &u0, &[2, 3], None)?;
    s.stop_after_bps = Some(1);
    Ok(s)
}

/// `I = {p3}`, `P = {int}`; starts at `x ≡ 0, p = (0, 0.1, 0)`.
pub fn infeasible_schedule(p: &StagedProblem) -> Result<Schedule> {
    let disc = discretization(MESH_N, MESH_M, true)?;
    let mut s = plan(p, &trivial_start(&disc), &[3], None)?;
    s.stop_after_bps = Some(1);
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dimensions() {
        let p = build(Form::FurtherExpanded).unwrap();
        assert_eq!(p.n_u(), 20 * 5 * 2 + 3);
        assert_eq!(p.n_phi(), 20 * 4 * 2 + 19 * 2 + 2);
        assert_eq!(p.manifold_dim_phi(), 3);
        assert_eq!(p.monitor_labels(), &["J", "p1", "p2", "p3"]);
        assert_eq!(p.ineq_labels(), &["int"]);
        let o = build(Form::Original).unwrap();
        assert_eq!(o.n_ineq(), 0);
    }

    #[test]
    fn trivial_start_values() {
        let p = build(Form::FurtherExpanded).unwrap();
        let disc = discretization(MESH_N, MESH_M, true).unwrap();
        let u0 = trivial_start(&disc);
        let v = p.eval_stages(&u0).unwrap();
        assert_eq!(v.phi.amax(), 0.0);
        assert!((v.psi[0] - 1.001).abs() < 1e-12);
        assert!((v.g[0] - 0.5).abs() < 1e-12);
    }
}
