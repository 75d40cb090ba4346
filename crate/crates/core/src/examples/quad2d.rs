//! Two-dimensional quadratic objective with two linear inequalities:
//! minimize `(x − 2)² + 2(y − 1)²` subject to `x + 4y − 3 ≤ 0` and
//! `−x + y ≤ 0`. The unique minimizer is `(5/3, 1/3)` with `σ = (2/3, 0)`.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::staged::{Form, Stage, StagedProblem};
use crate::successive_driver::{plan, Intervention, Schedule};

/// Builds the problem; `with_psi2` adds the monitor `ψ₂(u) = y`.
pub fn build(with_psi2: bool) -> StagedProblem {
    let name = if with_psi2 { "quad2d+psi2" } else { "quad2d" };
    let mut p = StagedProblem::new(name, Form::FurtherExpanded);
    let stages = [
        Stage::zero("u", 0, vec![], 2, |_| DVector::zeros(0))
            .with_jacobian(|_| DMatrix::zeros(0, 2)),
        Stage::monitor("psi1", 1, vec![0, 1], |x| {
            DVector::from_element(1, (x[0] - 2.0).powi(2) + 2.0 * (x[1] - 1.0).powi(2))
        })
        .with_jacobian(|x| DMatrix::from_row_slice(1, 2, &[2.0 * (x[0] - 2.0), 4.0 * (x[1] - 1.0)]))
        .with_adjoint_hessian(|_, w| {
            DMatrix::from_row_slice(2, 2, &[2.0 * w[0], 0.0, 0.0, 4.0 * w[0]])
        }),
    ];
    for s in stages {
        p.add_stage(s).expect("valid stage");
    }
    if with_psi2 {
        p.add_stage(
            Stage::monitor("psi2", 1, vec![1], |x| DVector::from_element(1, x[0]))
                .with_jacobian(|_| DMatrix::from_element(1, 1, 1.0))
                .with_adjoint_hessian(|_, _| DMatrix::zeros(1, 1)),
        )
        .expect("valid stage");
    }
    p.add_stage(
        Stage::inequality("g", 2, vec![0, 1], |x| {
            DVector::from_vec(vec![x[0] + 4.0 * x[1] - 3.0, -x[0] + x[1]])
        })
        .with_jacobian(|_| DMatrix::from_row_slice(2, 2, &[1.0, 4.0, -1.0, 1.0]))
        .with_adjoint_hessian(|_, _| DMatrix::zeros(2, 2)),
    )
    .expect("valid stage");
    p.name_unknown("x", 0);
    p.name_unknown("y", 1);
    p
}

/// Starting regions, named by the signs of `(G₁, G₂)` at the start.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    PlusMinus,
    PlusPlus,
    MinusPlus,
    MinusMinus,
}

impl Region {
    pub const ALL: [Region; 4] = [
        Region::PlusMinus,
        Region::PlusPlus,
        Region::MinusPlus,
        Region::MinusMinus,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Region::PlusMinus => "u+-",
            Region::PlusPlus => "u++",
            Region::MinusPlus => "u-+",
            Region::MinusMinus => "u--",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.name() == s)
    }

    pub fn start(self) -> [f64; 2] {
        match self {
            Region::PlusMinus => [3.0, 1.0],
            Region::PlusPlus => [1.0, 2.0],
            Region::MinusPlus => [-4.0, 0.0],
            Region::MinusMinus => [1.0, -2.0],
        }
    }
}

/// Problem, schedule and scripted constraint activations for one start.
/// The feasible start needs the extra monitor `ψ₂ = y` held at `y₀`.
pub fn schedule(region: Region) -> Result<(StagedProblem, Schedule, Vec<Intervention>)> {
    let u0 = region.start();
    let (p, i_set, script) = match region {
        Region::PlusMinus | Region::PlusPlus => (build(false), vec![], vec![]),
        // the first run ends on G₁ = 0; continue on that surface to ν₁ = 1
        Region::MinusPlus => (
            build(false),
            vec![],
            vec![Intervention {
                activate: 0,
                stage: Some(0),
            }],
        ),
        // driving ν₂ to zero meets G₁ = 0
        Region::MinusMinus => (
            build(true),
            vec![1],
            vec![Intervention {
                activate: 0,
                stage: Some(2),
            }],
        ),
    };
    let sched = plan(&p, &u0, &i_set, None)?;
    Ok((p, sched, script))
}

/// Objective value.
pub fn psi1(x: f64, y: f64) -> f64 {
    (x - 2.0).powi(2) + 2.0 * (y - 1.0).powi(2)
}

/// Inequality values `(G₁, G₂)`.
pub fn g(x: f64, y: f64) -> [f64; 2] {
    [x + 4.0 * y - 3.0, -x + y]
}

/// KKT candidates from enumerating the four active sets. Each entry is
/// `(u, σ, admissible)` where admissible means primal and dual feasible.
pub fn kkt_candidates() -> Vec<([f64; 2], [f64; 2], bool)> {
    // stationarity: 2(x − 2) + σ₁ − σ₂ = 0, 4(y − 1) + 4σ₁ + σ₂ = 0
    let mut out = Vec::new();
    for (a1, a2) in [(false, false), (false, true), (true, false), (true, true)] {
        // unknowns (x, y, σ₁, σ₂); rows: stationarity ×2, then G or σ rows
        let mut m = DMatrix::zeros(4, 4);
        let mut r = DVector::zeros(4);
        m.row_mut(0).copy_from_slice(&[2.0, 0.0, 1.0, -1.0]);
        r[0] = 4.0;
        m.row_mut(1).copy_from_slice(&[0.0, 4.0, 4.0, 1.0]);
        r[1] = 4.0;
        if a1 {
            m.row_mut(2).copy_from_slice(&[1.0, 4.0, 0.0, 0.0]);
            r[2] = 3.0;
        } else {
            m[(2, 2)] = 1.0;
        }
        if a2 {
            m.row_mut(3).copy_from_slice(&[-1.0, 1.0, 0.0, 0.0]);
        } else {
            m[(3, 3)] = 1.0;
        }
        let s = m.lu().solve(&r).expect("nonsingular active-set system");
        let gv = g(s[0], s[1]);
        let ok = gv.iter().all(|&v| v <= 1e-12) && s[2] >= -1e-12 && s[3] >= -1e-12;
        out.push(([s[0], s[1]], [s[2], s[3]], ok));
    }
    out
}
