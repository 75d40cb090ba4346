//! Pseudo-arclength continuation of one-dimensional solution manifolds of a
//! restricted augmented system, with fold, branch-point, target and boundary
//! detection.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{bordered, newton_correct, Lu, NewtonSettings, NonlinearSystem};
use crate::staged::{AugmentedPoint, ParameterState, StagedProblem};


/// Classification of a chart.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    RP,
    FP,
    BP,
    EP,
    MX,
    GB,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Label::RP => "RP",
            Label::FP => "FP",
            Label::BP => "BP",
            Label::EP => "EP",
            Label::MX => "MX",
            Label::GB => "GB",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Label {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "RP" => Label::RP,
            "FP" => Label::FP,
            "BP" => Label::BP,
            "EP" => Label::EP,
            "MX" => Label::MX,
            "GB" => Label::GB,
            _ => return Err(Error::Config(format!("unknown label `{s}`"))),
        })
    }
}

/// How a run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Terminal {
    EP,
    MX,
    GB,
    MaxSteps,
}

impl fmt::Display for Terminal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Terminal::EP => "EP",
            Terminal::MX => "MX",
            Terminal::GB => "GB",
            Terminal::MaxSteps => "max_steps",
        };
        f.write_str(s)
    }
}

/// One converged point on a branch.
#[derive(Debug, Clone)]
pub struct Chart {
    pub id: usize,
    pub z: AugmentedPoint,
    /// `z` packed for the parameter state of the run.
    pub x: DVector<f64>,
    pub tangent: DVector<f64>,
    pub h: f64,
    pub label: Label,
    pub iters: usize,
    /// Sign and `ln |det|` of `[J; tᵀ]`.
    pub det: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    /// Zero of `watch − value`.
    Target,
    /// Sign change of the tangent component of `watch`.
    Fold,
    /// Crossing of a box bound on `watch`.
    Boundary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub name: String,
    pub kind: EventKind,
    pub watch: String,
    #[serde(default)]
    pub value: f64,
    /// Whether the run stops at this event.
    #[serde(default)]
    pub terminal: bool,
}

impl Event {
    pub fn target(watch: &str, value: f64) -> Self {
        Event {
            name: format!("{watch}={value}"),
            kind: EventKind::Target,
            watch: watch.to_string(),
            value,
            terminal: true,
        }
    }

    pub fn fold(watch: &str) -> Self {
        Event {
            name: format!("fold({watch})"),
            kind: EventKind::Fold,
            watch: watch.to_string(),
            value: 0.0,
            terminal: false,
        }
    }

    pub fn label(&self) -> Label {
        match self.kind {
            EventKind::Target => Label::EP,
            EventKind::Fold => Label::FP,
            EventKind::Boundary => Label::GB,
        }
    }
}

/// Box constraint `lo ≤ watch ≤ hi` on a named quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bound {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
}

impl Bound {
    pub fn new(name: &str, lo: f64, hi: f64) -> Self {
        Bound {
            name: name.to_string(),
            lo,
            hi,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Settings {
    pub h0: f64,
    pub h_max: f64,
    pub h_min: f64,
    pub max_steps: usize,
    pub newton_tol: f64,
    pub max_newton: usize,
    /// Smallest accepted cosine between consecutive tangents.
    pub min_cos: f64,
    /// Watch the sign of `det [J; tᵀ]` for branch points.
    pub detect_bp: bool,
    /// End the run (as EP) once this many branch points have been located.
    pub stop_after_bps: Option<usize>,
    pub event_tol: f64,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            h0: 0.01,
            h_max: 0.5,
            h_min: 1e-8,
            max_steps: 1000,
            newton_tol: crate::linalg::NEWTON_TOL,
            max_newton: crate::linalg::MAX_NEWTON,
            min_cos: 0.8,
            detect_bp: false,
            stop_after_bps: None,
            event_tol: 1e-10,
        }
    }
}

impl Settings {
    fn newton(&self) -> NewtonSettings {
        NewtonSettings {
            tol: self.newton_tol,
            max_iter: self.max_newton,
        }
    }
}

/// An event located on a branch; `chart` indexes [`Branch::charts`].
#[derive(Debug, Clone)]
pub struct Hit {
    pub event: Event,
    pub chart: usize,
}

#[derive(Debug, Clone)]
pub struct Branch {
    pub charts: Vec<Chart>,
    pub events_hit: Vec<Hit>,
    pub terminal: Terminal,
    pub ps: ParameterState,
}

impl Branch {
    pub fn last(&self) -> &Chart {
        self.charts.last().expect("a branch has at least one chart")
    }

    pub fn labeled(&self, label: Label) -> impl Iterator<Item = &Chart> {
        self.charts.iter().filter(move |c| c.label == label)
    }

    /// Number of located folds of `watch` (including folds that coincide
    /// with branch points).
    pub fn fold_count(&self, watch: &str) -> usize {
        self.events_hit
            .iter()
            .filter(|h| h.event.kind == EventKind::Fold && h.event.watch == watch)
            .count()
    }
}

/// Initial direction of a run.
#[derive(Debug, Clone)]
pub enum Direction {
    Increase(String),
    Decrease(String),
    /// Explicit initial tangent in the packed coordinates of the run.
    Tangent(DVector<f64>),
}

struct Restricted<'a> {
    p: &'a StagedProblem,
    ps: &'a ParameterState,
    template: &'a AugmentedPoint,
}

impl NonlinearSystem for Restricted<'_> {
    fn residual(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let z = self.p.unpack(x, self.ps, self.template)?;
        self.p.assemble_residual(&z)
    }

    fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let z = self.p.unpack(x, self.ps, self.template)?;
        Ok(self.p.assemble_jacobian(&z, self.ps)?.0)
    }
}

/// Unit tangent at `x` oriented along `border`, plus sign and `ln|det|` of
/// `[J; tᵀ]`.
struct TangentInfo {
    t: DVector<f64>,
    det: (f64, f64),
}

fn tangent_from_jacobian(jac: &DMatrix<f64>, border: &DVector<f64>) -> Result<TangentInfo> {
    let lu = Lu::new(bordered(jac, border));
    if lu.is_singular() {
        return Err(Error::RankDrop);
    }
    let mut e = DVector::zeros(jac.ncols());
    e[jac.nrows()] = 1.0;
    let t = lu.solve(&e);
    let n = t.norm();
    if !n.is_finite() || n == 0.0 {
        return Err(Error::RankDrop);
    }
    let (sign, ld) = lu.log_det();
    Ok(TangentInfo {
        t: t / n,
        det: (sign, ld + n.ln()),
    })
}

/// Deterministic vector without special structure, used where any generic
/// direction will do.
pub(crate) fn generic_vector(n: usize) -> DVector<f64> {
    let phi = 0.618_033_988_749_894_9;
    let v = DVector::from_fn(n, |i, _| ((i as f64 + 1.0) * phi).fract() - 0.5);
    let norm = v.norm();
    v / norm
}

/// A one-dimensional continuation problem: problem, parameter state,
/// settings, events and domain bounds.
pub struct Continuation<'a> {
    pub problem: &'a StagedProblem,
    pub ps: ParameterState,
    pub settings: Settings,
    pub events: Vec<Event>,
    pub bounds: Vec<Bound>,
}

enum Candidate {
    Event(usize),
    BranchPoint,
    Bound { index: usize, value: f64 },
}

struct Located {
    s: f64,
    chart: Chart,
    cand: Candidate,
}

impl<'a> Continuation<'a> {
    pub fn new(problem: &'a StagedProblem, ps: ParameterState) -> Self {
        Continuation {
            problem,
            ps,
            settings: Settings::default(),
            events: Vec::new(),
            bounds: Vec::new(),
        }
    }

    pub fn with_settings(mut self, settings: Settings) -> Self {
        self.settings = settings;
        self
    }

    pub fn with_event(mut self, e: Event) -> Self {
        self.events.push(e);
        self
    }

    pub fn with_bounds(mut self, b: Vec<Bound>) -> Self {
        self.bounds = b;
        self
    }

    fn system<'b>(&'b self, template: &'b AugmentedPoint) -> Restricted<'b> {
        Restricted {
            p: self.problem,
            ps: &self.ps,
            template,
        }
    }

    fn jac(&self, x: &DVector<f64>, template: &AugmentedPoint) -> Result<DMatrix<f64>> {
        self.system(template).jacobian(x)
    }

    fn index_of(&self, name: &str) -> Result<usize> {
        self.problem
            .quantity_index(&self.ps, name)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    fn quantity(&self, z: &AugmentedPoint, name: &str) -> Result<f64> {
        self.problem
            .quantity(z, name)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    fn check(&self) -> Result<()> {
        let dim = self.problem.manifold_dim(&self.ps)?;
        if dim != 1 {
            return Err(Error::ManifoldDimension(dim));
        }
        for e in &self.events {
            match e.kind {
                EventKind::Fold => {
                    self.index_of(&e.watch)?;
                }
                _ => {
                    if !self.problem.has_quantity(&e.watch) {
                        return Err(Error::UnknownParameter(e.watch.clone()));
                    }
                }
            }
        }
        for b in &self.bounds {
            if !self.problem.has_quantity(&b.name) {
                return Err(Error::UnknownParameter(b.name.clone()));
            }
        }
        Ok(())
    }

    /// `c.x + c.h · c.tangent`.
    pub fn predict(c: &Chart) -> DVector<f64> {
        &c.x + c.h * &c.tangent
    }

    /// Corrects `start` onto the manifold and computes its tangent.
    pub fn initial_chart(&self, start: &AugmentedPoint, dir: &Direction) -> Result<Chart> {
        self.check()?;
        let x0 = self.problem.pack(start, &self.ps)?;
        let n = x0.len();
        let sys = self.system(start);
        let (orient, explicit) = match dir {
            Direction::Increase(name) | Direction::Decrease(name) => {
                let mut e = DVector::zeros(n);
                e[self.index_of(name)?] = if matches!(dir, Direction::Increase(_)) {
                    1.0
                } else {
                    -1.0
                };
                (e, false)
            }
            Direction::Tangent(t) => {
                if t.len() != n {
                    return Err(Error::Dimension(format!(
                        "initial tangent has length {}, expected {n}",
                        t.len()
                    )));
                }
                (t.normalize(), true)
            }
        };
        let tangent_at = |x: &DVector<f64>| -> Result<TangentInfo> {
            let j = sys.jacobian(x)?;
            match tangent_from_jacobian(&j, &orient) {
                Ok(t) => Ok(t),
                Err(Error::RankDrop) => {
                    // orientation vector lies in the row space; use a generic
                    // border and orient afterwards
                    let mut ti = tangent_from_jacobian(&j, &generic_vector(n))?;
                    if ti.t.dot(&orient) < 0.0 {
                        ti.t = -ti.t;
                        ti.det.0 = -ti.det.0;
                    }
                    Ok(ti)
                }
                Err(e) => Err(e),
            }
        };

        let f0 = sys.residual(&x0)?;
        let (x, iters) = if f0.amax() <= self.settings.newton_tol {
            (x0, 0)
        } else {
            let border = if explicit {
                orient.clone()
            } else {
                tangent_at(&x0)?.t
            };
            let out = newton_correct(&sys, &x0, Some(&border), self.settings.newton())?;
            if !out.converged {
                return Err(Error::NoConvergence(format!(
                    "initial correction, residual {:.3e}",
                    out.residual_norm()
                )));
            }
            (out.z, out.iters)
        };
        let (t, det) = if explicit {
            // at a branch point the bordered matrix with the requested
            // direction is singular; keep the direction as given
            (orient.clone(), (0.0, f64::NEG_INFINITY))
        } else {
            let ti = tangent_at(&x)?;
            (ti.t, ti.det)
        };
        Ok(Chart {
            id: 1,
            z: self.problem.unpack(&x, &self.ps, start)?,
            x,
            tangent: t,
            h: self.settings.h0,
            label: Label::EP,
            iters,
            det,
        })
    }

    /// Corrects the predictor of `c` with step `h` and border `c.tangent`.
    /// Returns the new chart (unlabeled) or `None` when the corrector fails,
    /// the tangent turns too sharply, or a complementarity kink is crossed.
    fn try_step(&self, c: &Chart, h: f64) -> Result<Option<Chart>> {
        let pred = &c.x + h * &c.tangent;
        self.correct(c, &pred, false).map(|r| {
            r.map(|mut ch| {
                ch.h = h;
                ch
            })
        })
    }

    /// Newton correction of `pred` in the hyperplane orthogonal to
    /// `c.tangent`. With `lenient`, a singular bordered matrix at the
    /// corrected point keeps `c.tangent` (used while localizing branch points).
    fn correct(&self, c: &Chart, pred: &DVector<f64>, lenient: bool) -> Result<Option<Chart>> {
        let sys = self.system(&c.z);
        let out = match newton_correct(&sys, pred, Some(&c.tangent), self.settings.newton()) {
            Ok(o) => o,
            Err(Error::Stage { .. }) | Err(Error::Domain(_)) => return Ok(None),
            Err(e) => return Err(e),
        };
        if !out.converged {
            return Ok(None);
        }
        let jac = match self.jac(&out.z, &c.z) {
            Ok(j) => j,
            Err(Error::Stage { .. }) => return Ok(None),
            Err(e) => return Err(e),
        };
        let ti = match tangent_from_jacobian(&jac, &c.tangent) {
            Ok(t) => t,
            Err(Error::RankDrop) if lenient => TangentInfo {
                t: c.tangent.clone(),
                det: Lu::new(bordered(&jac, &c.tangent)).log_det(),
            },
            Err(Error::RankDrop) => return Ok(None),
            Err(e) => return Err(e),
        };
        let z = self.problem.unpack(&out.z, &self.ps, &c.z)?;
        Ok(Some(Chart {
            id: c.id + 1,
            z,
            x: out.z,
            tangent: ti.t,
            h: c.h,
            label: Label::RP,
            iters: out.iters,
            det: ti.det,
        }))
    }

    /// Whether an inequality pair with vanishing relaxation passes through
    /// the kink of `χ` between two charts.
    fn crosses_kink(&self, a: &AugmentedPoint, b: &AugmentedPoint) -> bool {
        let act = self.problem.activated();
        (0..self.problem.n_ineq()).any(|k| {
            if act.contains(&k) || a.kappa[k].abs() > 1e-9 || b.kappa[k].abs() > 1e-9 {
                return false;
            }
            let sa = a.sigma[k] + a.xi[k];
            let sb = b.sigma[k] + b.xi[k];
            sa * sb < 0.0
        })
    }

    /// One accepted step with adaptive step size. `Ok(None)` means the step
    /// size fell below `h_min`.
    pub fn step(&self, c: &Chart) -> Result<Option<Chart>> {
        let mut h = c.h;
        loop {
            if h < self.settings.h_min {
                return Ok(None);
            }
            if let Some(mut next) = self.try_step(c, h)? {
                let cos = c.tangent.dot(&next.tangent);
                if cos >= self.settings.min_cos && !self.crosses_kink(&c.z, &next.z) {
                    next.h = if next.iters <= 3 {
                        (2.0 * h).min(self.settings.h_max)
                    } else {
                        h
                    };
                    return Ok(Some(next));
                }
            }
            h *= 0.5;
        }
    }

    fn event_value(&self, e: &Event, c: &Chart) -> Result<f64> {
        match e.kind {
            EventKind::Target | EventKind::Boundary => Ok(self.quantity(&c.z, &e.watch)? - e.value),
            EventKind::Fold => Ok(c.tangent[self.index_of(&e.watch)?]),
        }
    }

    /// Chart at step fraction `s` (arclength along `a.tangent`).
    fn chart_at(&self, a: &Chart, s: f64) -> Result<Chart> {
        let pred = &a.x + s * &a.tangent;
        self.correct(a, &pred, true)?
            .ok_or_else(|| Error::NoConvergence(format!("event localization at s = {s:.6e}")))
    }

    /// Illinois iteration for a zero of `f(chart(s))` on `[0, s_b]`.
    fn illinois<F>(
        &self,
        a: &Chart,
        b: &Chart,
        fa: f64,
        fb: f64,
        tol: f64,
        f: F,
    ) -> Result<(f64, Chart)>
    where
        F: Fn(&Chart) -> Result<f64>,
    {
        let s_b = a.tangent.dot(&(&b.x - &a.x));
        if fb == 0.0 {
            return Ok((s_b, b.clone()));
        }
        let (mut lo, mut hi, mut flo, mut fhi) = (0.0, s_b, fa, fb);
        let mut side = 0i8;
        let mut best: Option<(f64, Chart)> = None;
        for _ in 0..100 {
            let mut s = (lo * fhi - hi * flo) / (fhi - flo);
            if !(s > lo.min(hi) && s < lo.max(hi)) {
                s = 0.5 * (lo + hi);
            }
            let c = self.chart_at(a, s)?;
            let fs = f(&c)?;
            if best
                .as_ref()
                .is_none_or(|(fbest, _)| fs.abs() < fbest.abs())
            {
                best = Some((fs, c.clone()));
            }
            if fs.abs() <= tol || (hi - lo).abs() <= 1e-15 * (1.0 + s_b.abs()) {
                return Ok((s, c));
            }
            if fs * fhi > 0.0 {
                hi = s;
                fhi = fs;
                if side == -1 {
                    flo *= 0.5;
                }
                side = -1;
            } else {
                lo = s;
                flo = fs;
                if side == 1 {
                    fhi *= 0.5;
                }
                side = 1;
            }
        }
        let (_, c) = best.expect("at least one trial");
        let s = a.tangent.dot(&(&c.x - &a.x));
        Ok((s, c))
    }
    /// Locates a sign change of event `e` between consecutive charts.
    pub fn locate_event(&self, a: &Chart, b: &Chart, e: &Event) -> Result<Chart> {
        let fa = self.event_value(e, a)?;
        let fb = self.event_value(e, b)?;
        if fa * fb > 0.0 || fa == 0.0 {
            return Err(Error::NoSignChange(e.watch.clone()));
        }
        let tol = match e.kind {
            EventKind::Fold => 1e-10,
            _ => self.settings.event_tol,
        };
        let (_, mut c) = self.illinois(a, b, fa, fb, tol, |c| self.event_value(e, c))?;
        c.label = e.label();
        Ok(c)
    }

    /// Locates a sign change of `det [J; tᵀ]` between consecutive charts.
    pub fn detect_branch_point(&self, a: &Chart, b: &Chart) -> Result<Option<Chart>> {
        if a.det.0 == 0.0 || b.det.0 == 0.0 || a.det.0 == b.det.0 {
            return Ok(None);
        }
        let (sa, la) = a.det;
        let fb = b.det.0 * sa * (b.det.1 - la).exp();
        let (s, mut c) = self.illinois(a, b, 1.0, fb, 1e-12, |c| {
            Ok(c.det.0 * sa * (c.det.1 - la).exp())
        })?;
        // the bordered solve at the branch point is dominated by the second
        // null direction; take the incoming tangent, interpolated
        let s_b = a.tangent.dot(&(&b.x - &a.x));
        let th = if s_b != 0.0 {
            (s / s_b).clamp(0.0, 1.0)
        } else {
            0.5
        };
        let t = (1.0 - th) * &a.tangent + th * &b.tangent;
        c.tangent = t.normalize();
        c.label = Label::BP;
        Ok(Some(c))
    }

    fn bound_crossing(&self, c: &Chart) -> Result<Option<(usize, f64)>> {
        for (i, b) in self.bounds.iter().enumerate() {
            let v = match self.problem.quantity(&c.z, &b.name) {
                Some(v) => v,
                None => return Err(Error::UnknownParameter(b.name.clone())),
            };
            if v < b.lo {
                return Ok(Some((i, b.lo)));
            }
            if v > b.hi {
                return Ok(Some((i, b.hi)));
            }
        }
        Ok(None)
    }

    /// Runs from `start` in direction `dir` until a terminal event, MX, a
    /// domain boundary, or `max_steps`.
    pub fn run(&self, start: &AugmentedPoint, dir: &Direction) -> Result<Branch> {
        let first = self.initial_chart(start, dir)?;
        self.run_from(first)
    }

    pub fn run_from(&self, first: Chart) -> Result<Branch> {
        let mut branch = Branch {
            charts: vec![first],
            events_hit: Vec::new(),
            terminal: Terminal::MaxSteps,
            ps: self.ps.clone(),
        };
        let mut cur = branch.charts[0].clone();
        let mut n_bp = 0;
        let mut steps = 0;
        let mut next_id = cur.id + 1;
        loop {
            if steps >= self.settings.max_steps {
                branch.terminal = Terminal::MaxSteps;
                let last = branch.charts.len() - 1;
                if branch.charts[last].label == Label::RP {
                    branch.charts[last].label = Label::EP;
                }
                return Ok(branch);
            }
            let Some(mut next) = self.step(&cur)? else {
                let mut mx = cur.clone();
                mx.id = next_id;
                mx.label = Label::MX;
                branch.charts.push(mx);
                branch.terminal = Terminal::MX;
                return Ok(branch);
            };
            steps += 1;

            let mut found: Vec<Located> = Vec::new();
            let mut fold_hits: Vec<usize> = Vec::new();
            for (i, e) in self.events.iter().enumerate() {
                let fa = self.event_value(e, &cur)?;
                let fb = self.event_value(e, &next)?;
                if fa != 0.0 && fa * fb <= 0.0 {
                    if e.kind == EventKind::Fold {
                        fold_hits.push(i);
                        continue;
                    }
                    let c = self.locate_event(&cur, &next, e)?;
                    let s = cur.tangent.dot(&(&c.x - &cur.x));
                    found.push(Located {
                        s,
                        chart: c,
                        cand: Candidate::Event(i),
                    });
                }
            }
            let mut bp: Option<Located> = None;
            if self.settings.detect_bp {
                if let Some(c) = self.detect_branch_point(&cur, &next)? {
                    let s = cur.tangent.dot(&(&c.x - &cur.x));
                    bp = Some(Located {
                        s,
                        chart: c,
                        cand: Candidate::BranchPoint,
                    });
                }
            }
            // folds coinciding with a branch point are recorded on the BP chart
            let mut merged_folds: Vec<usize> = Vec::new();
            for i in fold_hits {
                let e = &self.events[i];
                match (self.locate_event(&cur, &next, e), &bp) {
                    (Ok(c), Some(b))
                        if (&c.x - &b.chart.x).amax() <= 1e-5 * (1.0 + b.chart.x.amax()) =>
                    {
                        merged_folds.push(i)
                    }
                    (Err(_), Some(_)) => merged_folds.push(i),
                    (Ok(c), _) => {
                        let s = cur.tangent.dot(&(&c.x - &cur.x));
                        found.push(Located {
                            s,
                            chart: c,
                            cand: Candidate::Event(i),
                        });
                    }
                    (Err(e), None) => return Err(e),
                }
            }
            if let Some(b) = bp {
                found.push(b);
            }
            if let Some((i, value)) = self.bound_crossing(&next)? {
                let e = Event {
                    name: format!("bound({})", self.bounds[i].name),
                    kind: EventKind::Boundary,
                    watch: self.bounds[i].name.clone(),
                    value,
                    terminal: true,
                };
                let c = self.locate_event(&cur, &next, &e)?;
                let s = cur.tangent.dot(&(&c.x - &cur.x));
                found.push(Located {
                    s,
                    chart: c,
                    cand: Candidate::Bound { index: i, value },
                });
            }
            found.sort_by(|a, b| a.s.total_cmp(&b.s));

            let mut stop: Option<Terminal> = None;
            for mut loc in found {
                loc.chart.id = next_id;
                next_id += 1;
                loc.chart.h = next.h;
                let idx = branch.charts.len();
                match loc.cand {
                    Candidate::Event(i) => {
                        let e = self.events[i].clone();
                        let terminal = e.terminal;
                        branch.events_hit.push(Hit {
                            event: e,
                            chart: idx,
                        });
                        branch.charts.push(loc.chart);
                        if terminal {
                            stop = Some(Terminal::EP);
                        }
                    }
                    Candidate::BranchPoint => {
                        for &i in &merged_folds {
                            branch.events_hit.push(Hit {
                                event: self.events[i].clone(),
                                chart: idx,
                            });
                        }
                        branch.charts.push(loc.chart);
                        n_bp += 1;
                        if self.settings.stop_after_bps.is_some_and(|m| n_bp >= m) {
                            stop = Some(Terminal::EP);
                        }
                    }
                    Candidate::Bound { index, value } => {
                        branch.events_hit.push(Hit {
                            event: Event {
                                name: format!("bound({})", self.bounds[index].name),
                                kind: EventKind::Boundary,
                                watch: self.bounds[index].name.clone(),
                                value,
                                terminal: true,
                            },
                            chart: idx,
                        });
                        branch.charts.push(loc.chart);
                        stop = Some(Terminal::GB);
                    }
                }
                if stop.is_some() {
                    break;
                }
            }
            if let Some(t) = stop {
                branch.terminal = t;
                return Ok(branch);
            }
            next.id = next_id;
            next_id += 1;
            branch.charts.push(next.clone());
            cur = next;
        }
    }

    /// Tangent of the secondary branch through the branch point `bp`,
    /// orthogonal to the incoming tangent. The sign makes the component of
    /// `orient` positive (falling back to the first free parameter).
    pub fn switch_branch(&self, bp: &Chart, orient: Option<&str>) -> Result<DVector<f64>> {
        let jac = self.jac(&bp.x, &bp.z)?;
        let t1 = bp.tangent.normalize();
        let lu = Lu::new(bordered(&jac, &t1));
        let rcond = lu.rcond();
        let mut v = generic_vector(t1.len());
        for _ in 0..3 {
            v = lu.solve(&v);
            let n = v.norm();
            if !n.is_finite() || n == 0.0 {
                return Err(Error::NotBranchPoint("inverse iteration broke down".into()));
            }
            v /= n;
        }
        v -= v.dot(&t1) * &t1;
        let n = v.norm();
        if n < 1e-6 {
            return Err(Error::NotBranchPoint(
                "second null direction parallel to the incoming tangent".into(),
            ));
        }
        v /= n;
        let jv = (&jac * &v).amax();
        let scale = jac.amax().max(1.0);
        if jv > 1e-6 * scale || rcond > 1e-5 {
            return Err(Error::NotBranchPoint(format!(
                "‖J t₂‖ = {jv:.3e}, rcond = {rcond:.3e}"
            )));
        }
        let mut idx = orient.and_then(|name| self.problem.quantity_index(&self.ps, name));
        if idx.is_some_and(|i| v[i].abs() <= 1e-8) {
            idx = None;
        }
        let idx = idx.or_else(|| (self.problem.core_len()..v.len()).find(|&i| v[i].abs() > 1e-8));
        if let Some(i) = idx {
            if v[i] < 0.0 {
                v = -v;
            }
        }
        Ok(v)
    }

    /// Reciprocal condition estimate of `[J; tᵀ]` at a chart.
    pub fn bordered_rcond(&self, c: &Chart) -> Result<f64> {
        let jac = self.jac(&c.x, &c.z)?;
        Ok(Lu::new(bordered(&jac, &c.tangent)).rcond())
    }

    /// `‖F‖∞` at a chart.
    pub fn residual_norm(&self, z: &AugmentedPoint) -> Result<f64> {
        Ok(self.problem.assemble_residual(z)?.amax())
    }
}
