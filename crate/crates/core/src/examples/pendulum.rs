//! Optimal control of an inverted pendulum on a cart.
//!
//! ```text
//! (M + m)ẍ − mlθ̇² sin θ + mlθ̈ cos θ = u,
//! mẍ cos θ + mlθ̈ − mg sin θ = 0,
//! θ(0) = 0.1,  θ̇(0) = x(0) = ẋ(0) = 0,
//! J = ∫₀² (100θ² + 40w² + u²) dt,
//! ```
//!
//! with `u(t)` a 10-term Chebyshev expansion whose coefficients are the
//! problem parameters. The weighted term `w` is the cart displacement `x`
//! by default, which reproduces the reference optimum values
//! (`J = 5.5759, ∫u² = 3.9457, ∫(θ² + x²) = 0.037115`); the angular rate
//! `θ̇` is available as [`Penalty::AngularRate`] and leads to a different
//! optimum (`J ≈ 2.595`). Optional integral bounds `∫u² ≤ E_c` (`input`) or
//! `∫(θ² + x²) ≤ Y_c` (`output`). States are ordered `(x, θ, ẋ, θ̇)`.

use nalgebra::{DMatrix, DVector};

use crate::collocation::{
    chebyshev_arg, chebyshev_basis, integrate_ivp, BvpSpec, CollocationMesh, Discretization,
    Integrand,
};
use crate::continuation::Settings;
use crate::error::Result;
use crate::staged::{Form, StageKind, StagedProblem};
use crate::successive_driver::{plan, BpChoice, Schedule};

pub const CART_MASS: f64 = 2.0;
pub const BOB_MASS: f64 = 0.1;
pub const LENGTH: f64 = 0.5;
pub const GRAVITY: f64 = 9.81;
pub const T_FINAL: f64 = 2.0;
pub const N_COEF: usize = 10;
pub const THETA0: f64 = 0.1;
/// Input threshold `E_c`.
pub const INPUT_BOUND: f64 = 2.0;
/// Output threshold `Y_c`.
pub const OUTPUT_BOUND: f64 = 0.01;

/// Default mesh: intervals and collocation degree.
pub const MESH_N: usize = 10;
pub const MESH_M: usize = 4;

/// The state weighted by 40 in the objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Penalty {
    #[default]
    Displacement,
    AngularRate,
}

impl Penalty {
    fn state(self) -> usize {
        match self {
            Penalty::Displacement => 0,
            Penalty::AngularRate => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Unconstrained,
    Input,
    Output,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Unconstrained, Variant::Input, Variant::Output];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Unconstrained => "unconstrained",
            Variant::Input => "input",
            Variant::Output => "output",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.name() == s)
    }

    /// Initial Chebyshev coefficients.
    pub fn start_coefficients(self) -> Vec<f64> {
        let mut p = vec![0.0; N_COEF];
        if self == Variant::Input {
            p[..4].copy_from_slice(&[3.0, 3.0, 1.0, 1.0]);
        }
        p
    }

    /// Monitors held fixed on the first run: `p2…p10` without bounds,
    /// `p3…p10` with one (monitor 0 is `J`).
    pub fn i_set(self) -> Vec<usize> {
        match self {
            Variant::Unconstrained => (2..=N_COEF).collect(),
            _ => (3..=N_COEF).collect(),
        }
    }
}

fn basis(t: f64) -> Vec<f64> {
    chebyshev_basis(N_COEF, chebyshev_arg(t, 0.0, T_FINAL))
}

fn control(t: f64, p: &[f64]) -> f64 {
    basis(t).iter().zip(p).map(|(b, c)| b * c).sum()
}

/// `(ẍ, θ̈)` from the mass-matrix form.
pub fn accelerations(x: &[f64], u: f64) -> (f64, f64) {
    let (s, c) = x[1].sin_cos();
    let w = x[3];
    let (mm, m, l, g) = (CART_MASS, BOB_MASS, LENGTH, GRAVITY);
    let d = mm + m * s * s;
    let a = u + m * l * w * w * s - m * g * s * c;
    let b = (mm + m) * g * s - c * (u + m * l * w * w * s);
    (a / d, b / (l * d))
}

/// The vector field `(ẋ, θ̇, ẍ, θ̈)`.
pub fn field(t: f64, x: &[f64], p: &[f64]) -> DVector<f64> {
    let (xdd, thdd) = accelerations(x, control(t, p));
    DVector::from_vec(vec![x[2], x[3], xdd, thdd])
}

fn field_jacobian(t: f64, x: &[f64], p: &[f64]) -> DMatrix<f64> {
    let tk = basis(t);
    let u: f64 = tk.iter().zip(p).map(|(b, c)| b * c).sum();
    let (s, c) = x[1].sin_cos();
    let w = x[3];
    let (mm, m, l, g) = (CART_MASS, BOB_MASS, LENGTH, GRAVITY);
    let d = mm + m * s * s;
    let dd = 2.0 * m * s * c;
    let a = u + m * l * w * w * s - m * g * s * c;
    let a_th = m * l * w * w * c - m * g * (c * c - s * s);
    let a_w = 2.0 * m * l * w * s;
    let b = (mm + m) * g * s - c * (u + m * l * w * w * s);
    let b_th = (mm + m) * g * c + s * u + m * l * w * w * (s * s - c * c);
    let b_w = -2.0 * c * m * l * w * s;
    let mut j = DMatrix::zeros(4, 4 + N_COEF);
    j[(0, 2)] = 1.0;
    j[(1, 3)] = 1.0;
    j[(2, 1)] = (a_th * d - a * dd) / (d * d);
    j[(2, 3)] = a_w / d;
    j[(3, 1)] = (b_th * d - b * dd) / (l * d * d);
    j[(3, 3)] = b_w / (l * d);
    for k in 0..N_COEF {
        j[(2, 4 + k)] = tk[k] / d;
        j[(3, 4 + k)] = -c * tk[k] / (l * d);
    }
    j
}

fn spec(variant: Variant, penalty: Penalty) -> BvpSpec {
    let w = penalty.state();
    let x0 = [0.0, THETA0, 0.0, 0.0];
    let mut s = BvpSpec::new(4, N_COEF, field, 4, move |a, _, _| {
        DVector::from_iterator(4, a.iter().zip(&x0).map(|(v, w)| v - w))
    })
    .with_field_jacobian(field_jacobian)
    .with_bc_jacobian(|_, _, _| {
        let mut j = DMatrix::zeros(4, 8 + N_COEF);
        for c in 0..4 {
            j[(c, c)] = 1.0;
        }
        j
    })
    .with_integrand(
        Integrand::monitor("J", move |t, x, p| {
            let u = control(t, p);
            100.0 * x[1] * x[1] + 40.0 * x[w] * x[w] + u * u
        })
        .with_gradient(move |t, x, p| {
            let tk = basis(t);
            let u: f64 = tk.iter().zip(p).map(|(b, c)| b * c).sum();
            let mut g = DVector::zeros(4 + N_COEF);
            g[1] = 200.0 * x[1];
            g[w] = 80.0 * x[w];
            for k in 0..N_COEF {
                g[4 + k] = 2.0 * u * tk[k];
            }
            g
        }),
    );
    // bounds are spread uniformly so that the integral equals ‖·‖² − bound
    match variant {
        Variant::Unconstrained => {}
        Variant::Input => {
            s = s.with_integrand(input_integrand(StageKind::Inequality));
        }
        Variant::Output => {
            s = s.with_integrand(output_integrand(StageKind::Inequality));
        }
    }
    s
}

fn input_integrand(kind: StageKind) -> Integrand {
    let mut g = Integrand::monitor("input", |t, _, p| {
        control(t, p).powi(2) - INPUT_BOUND / T_FINAL
    })
    .with_gradient(|t, _, p| {
        let tk = basis(t);
        let u: f64 = tk.iter().zip(p).map(|(b, c)| b * c).sum();
        let mut g = DVector::zeros(4 + N_COEF);
        for k in 0..N_COEF {
            g[4 + k] = 2.0 * u * tk[k];
        }
        g
    });
    g.kind = kind;
    g
}

fn output_integrand(kind: StageKind) -> Integrand {
    let mut g = Integrand::monitor("output", |_, x, _| {
        x[1] * x[1] + x[0] * x[0] - OUTPUT_BOUND / T_FINAL
    })
    .with_gradient(|_, x, _| {
        let mut g = DVector::zeros(4 + N_COEF);
        g[0] = 2.0 * x[0];
        g[1] = 2.0 * x[1];
        g
    });
    g.kind = kind;
    g
}

pub fn discretization(variant: Variant, n: usize, m: usize) -> Result<Discretization> {
    discretization_with(variant, n, m, Penalty::default())
}

pub fn discretization_with(
    variant: Variant,
    n: usize,
    m: usize,
    penalty: Penalty,
) -> Result<Discretization> {
    Discretization::new(
        spec(variant, penalty),
        CollocationMesh::new(n, m, 0.0, T_FINAL)?,
    )
}

/// The problem on the default mesh.
pub fn build(variant: Variant) -> Result<StagedProblem> {
    build_on(variant, MESH_N, MESH_M)
}

/// Monitors `J, p1, …, p10`; the bound, if any, is the only inequality.
pub fn build_on(variant: Variant, n: usize, m: usize) -> Result<StagedProblem> {
    build_with(variant, n, m, Penalty::default())
}

pub fn build_with(variant: Variant, n: usize, m: usize, penalty: Penalty) -> Result<StagedProblem> {
    let d = discretization_with(variant, n, m, penalty)?;
    let mut p = StagedProblem::new(
        &format!("pendulum-{}", variant.name()),
        Form::FurtherExpanded,
    );
    let mut stages = d.stages("bvp")?.into_iter();
    p.add_stage(stages.next().expect("zero stage"))?;
    p.add_stage(stages.next().expect("objective stage"))?;
    for k in 0..N_COEF {
        p.add_stage(d.parameter_monitor(&format!("p{}", k + 1), k))?;
    }
    for s in stages {
        p.add_stage(s)?;
    }
    for k in 0..N_COEF {
        p.name_unknown(&format!("p{}", k + 1), d.p_index(k));
    }
    Ok(p)
}

/// Forward simulation from the initial conditions followed by a state
/// solve of the discretized equations.
pub fn start(variant: Variant, disc: &Discretization) -> Result<Vec<f64>> {
    let p = variant.start_coefficients();
    let steps = 2000;
    let tr = integrate_ivp(field, &[0.0, THETA0, 0.0, 0.0], &p, 0.0, T_FINAL, steps)?;
    let guess = tr.resample(disc, &p);
    disc.solve_states(&guess[..disc.n_states()], &p)
}

pub fn schedule(variant: Variant, problem: &StagedProblem) -> Result<Schedule> {
    let disc = discretization(variant, MESH_N, MESH_M)?;
    let u0 = start(variant, &disc)?;
    let mut s = plan(problem, &u0, &variant.i_set(), None)?;
    // with a bound the first manifold is a closed curve of constant
    // ‖u‖² or ‖y‖² carrying two minima and two maxima of J
    match variant {
        Variant::Unconstrained => s.stop_after_bps = Some(1),
        Variant::Output => s.stop_after_bps = Some(3),
        Variant::Input => {
            // The global minimum of J on the curve (J ≈ 28.1) leads to a
            // κ-manifold that folds back at κ ≈ 11.4 and never reaches 0.
            // The other minimum (J ≈ 103), met first when μ_p1 decreases,
            // connects to the bounded optimum.
            s.bp_choice = BpChoice::Index(0);
            s.stop_after_bps = Some(1);
        }
    }
    Ok(s)
}

/// Continuation settings: `J` starts in the thousands for the falling
/// pendulum, so the step-size cap is raised.
pub fn settings() -> Settings {
    Settings {
        h_max: 50.0,
        max_steps: 1000,
        ..Settings::default()
    }
}

/// `∫u² dt` on a discrete solution.
pub fn input_energy(disc: &Discretization, u: &[f64]) -> f64 {
    disc.integral(&input_integrand(StageKind::Monitor), u) + INPUT_BOUND
}

/// `∫(θ² + x²) dt` on a discrete solution.
pub fn output_energy(disc: &Discretization, u: &[f64]) -> f64 {
    disc.integral(&output_integrand(StageKind::Monitor), u) + OUTPUT_BOUND
}
