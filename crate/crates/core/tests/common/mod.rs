//! Checks shared by the property suites and the acceptance report. Each
//! check returns a [`Verdict`] so callers can assert or print it.

#![allow(dead_code)]

use std::time::{Duration, Instant};

use kktcont::continuation::{Continuation, Label};
use kktcont::examples::{self, quad2d};
use kktcont::staged::{AugmentedPoint, StagedProblem};
use kktcont::successive_driver::{kkt_check, Driver, Status};
use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

#[derive(Debug, Clone)]
pub struct Verdict {
    pub pass: bool,
    pub detail: String,
}

impl Verdict {
    pub fn new(pass: bool, detail: impl Into<String>) -> Self {
        Verdict {
            pass,
            detail: detail.into(),
        }
    }

    pub fn all(parts: Vec<Verdict>) -> Self {
        let pass = parts.iter().all(|v| v.pass);
        let detail = parts
            .iter()
            .map(|v| v.detail.as_str())
            .collect::<Vec<_>>()
            .join("; ");
        Verdict { pass, detail }
    }

    #[track_caller]
    pub fn assert(&self) {
        assert!(self.pass, "{}", self.detail);
    }
}

/// A schedule preset run to completion, with its wall time.
pub struct Finished {
    pub example: &'static str,
    pub schedule: &'static str,
    pub problem: StagedProblem,
    pub driver: Driver,
    pub status: Status,
    pub elapsed: Duration,
}

impl Finished {
    pub fn endpoint(&self) -> &AugmentedPoint {
        self.driver
            .records()
            .last()
            .expect("at least one run")
            .endpoint()
    }

    /// The problem as it was during a run, given the constraints it had
    /// replaced by `G_k = 0`.
    pub fn problem_for(&self, activated: &[usize]) -> StagedProblem {
        let mut p = self.problem.clone();
        for &k in activated {
            p = p.activate_constraint(k).expect("valid activation");
        }
        p
    }
}

pub fn run_preset(example: &'static str, schedule: &'static str) -> Finished {
    let preset = examples::preset(example, schedule).expect("registered preset");
    let t0 = Instant::now();
    let mut driver = Driver::new(&preset.problem, preset.schedule)
        .expect("valid schedule")
        .with_settings(preset.settings)
        .with_bounds(preset.bounds);
    let status = driver.run_scripted(&preset.script).expect("schedule runs");
    Finished {
        example,
        schedule,
        problem: preset.problem,
        driver,
        status,
        elapsed: t0.elapsed(),
    }
}

pub const QUAD2D: [&str; 4] = ["u+-", "u++", "u-+", "u--"];

/// Relative ∞-norm (max row sum) of `a − b` against `a`.
pub fn rel_inf_norm(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let row_sum = |m: &DMatrix<f64>| {
        m.row_iter()
            .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    };
    row_sum(&(a - b)) / row_sum(a).max(1.0)
}

/// Random augmented point near `base.u`: unknowns perturbed by up to
/// `spread` (relative to their size), multipliers and parameters uniform
/// in `[−1, 1]`.
pub fn random_point(
    p: &StagedProblem,
    base: &[f64],
    spread: f64,
    rng: &mut StdRng,
) -> AugmentedPoint {
    let mut z = p.trivial_point(base).expect("start fits");
    for u in z.u.iter_mut() {
        *u += spread * u.abs().max(1.0) * rng.gen_range(-1.0..1.0);
    }
    let mut fill = |v: &mut Vec<f64>| v.iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0));
    fill(&mut z.lambda);
    fill(&mut z.eta);
    fill(&mut z.sigma);
    fill(&mut z.mu);
    fill(&mut z.nu);
    fill(&mut z.xi);
    fill(&mut z.kappa);
    z
}

/// Assembled Jacobian (all continuation parameters free) against central
/// differences of the residual at `samples` random points; returns the
/// worst relative ∞-norm error.
pub fn jacobian_fd_error(
    p: &StagedProblem,
    base: &[f64],
    spread: f64,
    samples: usize,
    seed: u64,
) -> f64 {
    let mut rng = StdRng::seed_from_u64(seed);
    let ps = p.param_state();
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let z = random_point(p, base, spread, &mut rng);
        let (jac, _) = p.assemble_jacobian(&z, &ps).expect("jacobian");
        let x = p.pack(&z, &ps).expect("pack");
        let f = |x: &DVector<f64>| {
            p.assemble_residual(&p.unpack(x, &ps, &z).expect("unpack"))
                .expect("residual")
        };
        let mut fd = DMatrix::zeros(jac.nrows(), x.len());
        for j in 0..x.len() {
            let h = 1e-6 * x[j].abs().max(1.0);
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            fd.set_column(j, &((f(&xp) - f(&xm)) / (2.0 * h)));
        }
        worst = worst.max(rel_inf_norm(&jac, &fd));
    }
    worst
}

pub fn jacobian_check(
    example: &str,
    variant: Option<&str>,
    start: &str,
    spread: f64,
    samples: usize,
) -> Verdict {
    let p = examples::build(example, variant).expect("builds");
    let u0 = examples::start(example, variant, start).expect("start");
    let err = jacobian_fd_error(&p, &u0, spread, samples, 0x5eed);
    Verdict::new(
        err <= 1e-5,
        format!(
            "{example}/{}: worst relative error {err:.2e} over {samples} points",
            variant.unwrap_or("default")
        ),
    )
}

/// Along the `ν₁: 0 → 1` run of a schedule with `ℙ = ∅` the unknowns stay
/// at the branch point and `η₁` stays in `[0, 1]`.
pub fn secondary_invariance(f: &Finished) -> Verdict {
    if !f.driver.schedule().p_set.is_empty() {
        return Verdict::new(
            false,
            format!("{}/{}: P is not empty", f.example, f.schedule),
        );
    }
    let Some(rec) = f.driver.records().iter().find(|r| r.stage_index == 1) else {
        return Verdict::new(
            false,
            format!("{}/{}: no secondary run", f.example, f.schedule),
        );
    };
    let u_bp = &rec.branch.charts[0].z.u;
    let mut drift: f64 = 0.0;
    let mut eta_ok = true;
    for c in &rec.branch.charts {
        let d: f64 =
            c.z.u
                .iter()
                .zip(u_bp)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
        drift = drift.max(d);
        eta_ok &= (-1e-9..=1.0 + 1e-9).contains(&c.z.eta[0]);
    }
    let reached = (rec.endpoint().eta[0] - 1.0).abs() <= 1e-9;
    Verdict::new(
        drift <= 1e-8 && eta_ok && reached,
        format!(
            "{}/{}: max |u - u_BP| = {drift:.1e} over {} charts, eta1 in [0,1]: {eta_ok}, reaches 1: {reached}",
            f.example,
            f.schedule,
            rec.branch.charts.len()
        ),
    )
}

/// Every fold of `μ₁` and every branch point on the trivial-multiplier
/// runs is a rank drop of the augmented Jacobian.
pub fn trivial_fold_rank_drop(f: &Finished) -> Verdict {
    let mut worst: f64 = 0.0;
    let mut mult: f64 = 0.0;
    let mut count = 0;
    for rec in f.driver.records().iter().filter(|r| r.stage_index == 0) {
        let p = f.problem_for(&rec.activated);
        let cont = Continuation::new(&p, rec.ps.clone());
        let mut idx: Vec<usize> = rec
            .branch
            .events_hit
            .iter()
            .filter(|h| h.event.watch.starts_with("mu_") && h.event.label() == Label::FP)
            .map(|h| h.chart)
            .collect();
        idx.extend(
            rec.branch
                .charts
                .iter()
                .enumerate()
                .filter(|(_, c)| c.label == Label::BP)
                .map(|(i, _)| i),
        );
        idx.sort_unstable();
        idx.dedup();
        for i in idx {
            let c = &rec.branch.charts[i];
            mult =
                c.z.lambda
                    .iter()
                    .chain(&c.z.eta)
                    .fold(mult, |m, v| m.max(v.abs()));
            worst = worst.max(cont.bordered_rcond(c).expect("rcond"));
            count += 1;
        }
    }
    Verdict::new(
        count > 0 && worst < 1e-8 && mult <= 1e-10,
        format!(
            "{}/{}: {count} folds, largest rcond {worst:.1e}, largest multiplier {mult:.1e}",
            f.example, f.schedule
        ),
    )
}

pub fn run_count(f: &Finished) -> Verdict {
    let d = f.driver.schedule().d;
    let n = f.driver.runs_completed();
    Verdict::new(
        f.status == Status::Done && n == d + 1,
        format!(
            "{}/{}: d = {d}, runs = {n}, status {:?}",
            f.example, f.schedule, f.status
        ),
    )
}

pub fn endpoint_kkt(f: &Finished) -> Verdict {
    let rec = f.driver.records().last().expect("a run");
    let p = f.problem_for(&rec.activated);
    let report = kkt_check(&p, rec.endpoint()).expect("kkt_check");
    let failed: Vec<String> = report
        .checks
        .iter()
        .filter(|c| !c.pass)
        .map(|c| format!("{} = {:.1e}", c.name, c.value))
        .collect();
    Verdict::new(
        f.status == Status::Done && report.pass(),
        format!(
            "{}/{}: kkt {}",
            f.example,
            f.schedule,
            if failed.is_empty() {
                "pass".into()
            } else {
                failed.join(", ")
            }
        ),
    )
}

/// Minimum of the quadratic over the feasible set on a coarse grid, refined
/// once around the best cell.
pub fn grid_minimum() -> ([f64; 2], f64) {
    let search = |x0: f64, y0: f64, half: f64, n: usize| {
        let mut best = ([f64::NAN; 2], f64::INFINITY);
        let h = 2.0 * half / n as f64;
        for i in 0..=n {
            let x = x0 - half + i as f64 * h;
            for j in 0..=n {
                let y = y0 - half + j as f64 * h;
                if quad2d::g(x, y).iter().all(|&g| g <= 0.0) {
                    let v = quad2d::psi1(x, y);
                    if v < best.1 {
                        best = ([x, y], v);
                    }
                }
            }
        }
        best
    };
    let coarse = search(0.0, 0.0, 5.0, 2000);
    search(coarse.0[0], coarse.0[1], 0.01, 2000)
}

pub fn grid_oracle(endpoints: &[(&str, [f64; 2])]) -> Verdict {
    let (u, v) = grid_minimum();
    let mut parts = vec![Verdict::new(
        (v - 1.0).abs() <= 1e-4,
        format!("grid minimum {v:.6} at ({:.5}, {:.5})", u[0], u[1]),
    )];
    for (name, e) in endpoints {
        let d = (e[0] - u[0]).abs().max((e[1] - u[1]).abs());
        parts.push(Verdict::new(
            d <= 1e-4,
            format!("{name}: |endpoint - grid| = {d:.1e}"),
        ));
    }
    Verdict::all(parts)
}

/// Absolute comparison of named quantities.
pub fn close_to(label: &str, got: &[f64], want: &[f64], tol: f64) -> Verdict {
    let err = got
        .iter()
        .zip(want)
        .map(|(g, w)| (g - w).abs())
        .fold(0.0, f64::max);
    Verdict::new(
        got.len() == want.len() && err <= tol,
        format!("{label}: max error {err:.1e} (got {got:.4?})"),
    )
}

/// Equivalence `χ(a, b) = 0 ⇔ a ≥ 0, b ≥ 0, ab = 0` and the partials of
/// `χ` against central differences, on `n` random samples each.
pub fn fb_samples(n: usize, seed: u64) -> Verdict {
    use kktcont::complementarity::{fb_chi, fb_chi_grad};
    let mut rng = StdRng::seed_from_u64(seed);
    let coord = |rng: &mut StdRng| match rng.gen_range(0..5) {
        0 => 0.0,
        1 => rng.gen_range(-1e-6..1e-6),
        _ => rng.gen_range(-1e3..1e3),
    };
    let mut bad_equiv = 0;
    for _ in 0..n {
        let (a, b) = (coord(&mut rng), coord(&mut rng));
        let complementary = a >= 0.0 && b >= 0.0 && a * b == 0.0;
        if (fb_chi(a, b) == 0.0) != complementary {
            bad_equiv += 1;
        }
    }
    let mut worst: f64 = 0.0;
    let mut k = 0;
    while k < n {
        let (a, b): (f64, f64) = (rng.gen_range(-1e2..1e2), rng.gen_range(-1e2..1e2));
        if a.hypot(b) <= 1e-2 {
            continue;
        }
        let g = fb_chi_grad(a, b);
        let h = 1e-6 * a.hypot(b).max(1.0);
        let fd_a = (fb_chi(a + h, b) - fb_chi(a - h, b)) / (2.0 * h);
        let fd_b = (fb_chi(a, b + h) - fb_chi(a, b - h)) / (2.0 * h);
        worst = worst.max((g.d_a - fd_a).abs()).max((g.d_b - fd_b).abs());
        k += 1;
    }
    Verdict::new(
        bad_equiv == 0 && worst <= 1e-6,
        format!("FB: {bad_equiv}/{n} equivalence failures, worst gradient error {worst:.1e} over {n} samples"),
    )
}
