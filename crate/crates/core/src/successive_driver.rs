//! Successive continuation: from a root of `Φ` with trivial multipliers to a
//! KKT point through `d + 1` one-dimensional runs.
//!
//! Stage layout, with `I` the monitors whose `μ` is held fixed and `P` the
//! violated inequalities at the start:
//!
//! * fold-then-switch mode (`|I| + |P| = d − 1`): stage 0 follows the
//!   trivial-multiplier branch to a branch point, stage 1 follows the
//!   secondary branch until `ν₁ = 1`;
//! * direct mode (`|I| + |P| = d`): stage 0 drives `ν₁` to 1;
//! * afterwards one stage per entry of the release order drives `νᵢ` (i ∈ I)
//!   or `κₖ` (k ∈ P) to zero.

use serde::{Deserialize, Serialize};

use crate::complementarity::kappa_init;
use crate::continuation::{
    Bound, Branch, Chart, Continuation, Direction, Event, Label, Settings, Terminal,
};
use crate::error::{Error, Result};
use crate::linalg::NEWTON_TOL;
use crate::staged::{AugmentedPoint, ParameterState, StagedProblem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    FoldThenSwitch,
    Direct,
}

/// Which branch point of the first run to switch at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BpChoice {
    /// Smallest value of `μ₁`.
    SmallestMu,
    /// The n-th located branch point (0-based, in order along the run).
    Index(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    Increase,
    Decrease,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Schedule {
    /// Monitors (0-based, never 0) whose `μ` is fixed at the start.
    pub i_set: Vec<usize>,
    /// Remaining monitors other than the first; their `ν` is fixed at 0.
    pub j_set: Vec<usize>,
    /// Violated inequalities at the start.
    pub p_set: Vec<usize>,
    /// Satisfied inequalities at the start.
    pub z_set: Vec<usize>,
    pub kappa0: Vec<f64>,
    /// Parameters driven to zero after `ν₁ = 1`, in order.
    pub release_order: Vec<String>,
    /// Dimension of the solution manifold of `Φ = 0`.
    pub d: usize,
    pub mode: Mode,
    pub u0: Vec<f64>,
    /// Direction of `μ₁` on the first run; `None` tries decreasing first.
    pub first_direction: Option<Sense>,
    pub bp_choice: BpChoice,
    /// Stop the first run after this many branch points.
    pub stop_after_bps: Option<usize>,
}

/// Checks the starting point and dimension rule and sets up the schedule.
/// `i_set` holds 0-based monitor indices; `release_order` defaults to the
/// monitors in `i_set` in declaration order followed by `P`.
pub fn plan(
    p: &StagedProblem,
    u0: &[f64],
    i_set: &[usize],
    release_order: Option<Vec<String>>,
) -> Result<Schedule> {
    let l = p.n_monitors();
    if l == 0 {
        return Err(Error::Schedule(
            "the problem has no monitor functions".into(),
        ));
    }
    if let Some(&bad) = i_set.iter().find(|&&i| i == 0 || i >= l) {
        return Err(Error::Schedule(format!(
            "monitor index {bad} cannot be held fixed"
        )));
    }
    let vals = p.eval_stages(u0)?;
    if !vals.phi.is_empty() && vals.phi.amax() > NEWTON_TOL {
        return Err(Error::Schedule(format!(
            "u₀ is not a root of Φ (‖Φ‖ = {:.3e})",
            vals.phi.amax()
        )));
    }
    let ki = kappa_init(vals.g.as_slice())?;
    let d = p.manifold_dim_phi();
    let mut i_sorted = i_set.to_vec();
    i_sorted.sort_unstable();
    i_sorted.dedup();
    let count = i_sorted.len() + ki.positive.len();
    let mode = if count + 1 == d {
        Mode::FoldThenSwitch
    } else if count == d {
        Mode::Direct
    } else {
        return Err(Error::Schedule(format!(
            "|I| + |P| = {count} but d = {d}; need d − 1 or d"
        )));
    };
    let j_set = (1..l).filter(|i| !i_sorted.contains(i)).collect();
    let release_order = match release_order {
        Some(r) => {
            for name in &r {
                let ok = i_sorted
                    .iter()
                    .any(|&i| *name == format!("nu_{}", p.monitor_labels()[i]))
                    || ki
                        .positive
                        .iter()
                        .any(|&k| *name == format!("kappa_{}", p.ineq_labels()[k]));
                if !ok {
                    return Err(Error::Schedule(format!(
                        "`{name}` is not a ν in I or a κ in P"
                    )));
                }
            }
            if r.len() != count {
                return Err(Error::Schedule(format!(
                    "release order names {} of {count} parameters",
                    r.len()
                )));
            }
            r
        }
        None => i_sorted
            .iter()
            .map(|&i| format!("nu_{}", p.monitor_labels()[i]))
            .chain(
                ki.positive
                    .iter()
                    .map(|&k| format!("kappa_{}", p.ineq_labels()[k])),
            )
            .collect(),
    };
    Ok(Schedule {
        i_set: i_sorted,
        j_set,
        p_set: ki.positive,
        z_set: ki.negative,
        kappa0: ki.kappa0,
        release_order,
        d,
        mode,
        u0: u0.to_vec(),
        first_direction: None,
        bp_choice: BpChoice::SmallestMu,
        stop_after_bps: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    /// The stage target was reached.
    Reached,
    /// A run without a target ended normally (first run of fold-then-switch).
    Completed,
    Mx,
    Boundary,
    MaxSteps,
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub stage_index: usize,
    pub name: String,
    pub target: Option<(String, f64)>,
    pub ps: ParameterState,
    /// Inequalities replaced by `G_k = 0` during this run.
    pub activated: Vec<usize>,
    pub branch: Branch,
    pub outcome: Outcome,
}

impl RunRecord {
    pub fn endpoint(&self) -> &AugmentedPoint {
        &self.branch.last().z
    }
}

#[derive(Debug, Clone, PartialEq)]
enum StagePlan {
    Trivial,
    Secondary,
    Direct,
    Drive { watch: String, release: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    /// A stage finished and more remain.
    Continue,
    Done,
    /// Halted at an MX point, domain boundary or step limit; the last record
    /// holds the partial branch.
    Halted(Outcome),
}

/// Manual step applied at an MX halt: replace complementarity condition
/// `activate` by `G_k = 0`, optionally only when halted in stage `stage`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Intervention {
    pub activate: usize,
    #[serde(default)]
    pub stage: Option<usize>,
}

/// Executes a schedule stage by stage, allowing interventions at halts.
pub struct Driver {
    problem: StagedProblem,
    sched: Schedule,
    pub settings: Settings,
    pub bounds: Vec<Bound>,
    stages: Vec<StagePlan>,
    next: usize,
    point: AugmentedPoint,
    ps: ParameterState,
    resume: bool,
    records: Vec<RunRecord>,
}

impl Driver {
    pub fn new(problem: &StagedProblem, sched: Schedule) -> Result<Self> {
        let mut stages = match sched.mode {
            Mode::FoldThenSwitch => vec![StagePlan::Trivial, StagePlan::Secondary],
            Mode::Direct => vec![StagePlan::Direct],
        };
        for name in &sched.release_order {
            let release = match name.strip_prefix("nu_") {
                Some(label) => format!("mu_{label}"),
                None => name.clone(),
            };
            stages.push(StagePlan::Drive {
                watch: name.clone(),
                release,
            });
        }
        let point = problem.trivial_point(&sched.u0)?;
        let labels = problem.monitor_labels();
        let mut fix: Vec<(String, f64)> = Vec::new();
        for &i in &sched.i_set {
            fix.push((format!("mu_{}", labels[i]), point.mu[i]));
        }
        for &j in &sched.j_set {
            fix.push((format!("nu_{}", labels[j]), 0.0));
        }
        for (k, label) in problem.ineq_labels().iter().enumerate() {
            if !problem.activated().contains(&k) {
                fix.push((format!("kappa_{label}"), sched.kappa0[k]));
            }
        }
        let fix_ref: Vec<(&str, f64)> = fix.iter().map(|(n, v)| (n.as_str(), *v)).collect();
        let first = [format!("mu_{}", labels[0]), format!("nu_{}", labels[0])];
        let ps = problem
            .param_state()
            .restrict(&fix_ref, &[first[0].as_str(), first[1].as_str()])?;
        let dim = problem.manifold_dim(&ps)?;
        if dim != 1 {
            return Err(Error::ManifoldDimension(dim));
        }
        Ok(Driver {
            problem: problem.clone(),
            sched,
            settings: Settings::default(),
            bounds: Vec::new(),
            stages,
            next: 0,
            point,
            ps,
            resume: false,
            records: Vec::new(),
        })
    }

    pub fn with_settings(mut self, s: Settings) -> Self {
        self.settings = s;
        self
    }

    pub fn with_bounds(mut self, b: Vec<Bound>) -> Self {
        self.bounds = b;
        self
    }

    pub fn records(&self) -> &[RunRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<RunRecord> {
        self.records
    }

    pub fn problem(&self) -> &StagedProblem {
        &self.problem
    }

    pub fn schedule(&self) -> &Schedule {
        &self.sched
    }

    pub fn parameter_state(&self) -> &ParameterState {
        &self.ps
    }

    /// Current point: the start, or the endpoint of the last run.
    pub fn point(&self) -> &AugmentedPoint {
        &self.point
    }

    pub fn n_stages(&self) -> usize {
        self.stages.len()
    }

    pub fn is_done(&self) -> bool {
        self.next >= self.stages.len()
    }

    /// Number of distinct stages that produced a run.
    pub fn runs_completed(&self) -> usize {
        let mut idx: Vec<usize> = self.records.iter().map(|r| r.stage_index).collect();
        idx.dedup();
        idx.len()
    }

    fn first_labels(&self) -> (String, String) {
        let l = &self.problem.monitor_labels()[0];
        (format!("mu_{l}"), format!("nu_{l}"))
    }

    /// Replaces complementarity condition `k` by `G_k(u) = 0` at a halt
    /// and prepares to resume. After a halt in the first run of
    /// fold-then-switch mode the resumed stage is the `ν₁ → 1` stage.
    pub fn activate(&mut self, k: usize) -> Result<()> {
        self.problem = self.problem.activate_constraint(k)?;
        self.ps = self.ps.rebind(self.problem.param_names());
        let label = format!("kappa_{}", self.problem.ineq_labels()[k]);
        self.stages
            .retain(|s| !matches!(s, StagePlan::Drive { watch, .. } if *watch == label));
        if self.stages.get(self.next) == Some(&StagePlan::Trivial) {
            self.next += 1;
        }
        self.resume = true;
        Ok(())
    }

    fn continuation(&self, ps: ParameterState) -> Continuation<'_> {
        Continuation::new(&self.problem, ps)
            .with_settings(self.settings)
            .with_bounds(self.bounds.clone())
    }

    fn outcome(branch: &Branch, has_target: bool) -> Outcome {
        match branch.terminal {
            Terminal::EP if has_target => {
                if branch.events_hit.iter().any(|h| {
                    h.event.terminal && h.event.kind == crate::continuation::EventKind::Target
                }) {
                    Outcome::Reached
                } else {
                    Outcome::Completed
                }
            }
            Terminal::EP => Outcome::Completed,
            Terminal::MX => Outcome::Mx,
            Terminal::GB => Outcome::Boundary,
            Terminal::MaxSteps if has_target => Outcome::MaxSteps,
            Terminal::MaxSteps => Outcome::Completed,
        }
    }

    fn push(
        &mut self,
        name: String,
        target: Option<(String, f64)>,
        ps: ParameterState,
        branch: Branch,
    ) -> Outcome {
        let outcome = Self::outcome(&branch, target.is_some());
        self.point = branch.last().z.clone();
        self.records.push(RunRecord {
            stage_index: self.next,
            name,
            target,
            ps,
            activated: self.problem.activated().iter().copied().collect(),
            branch,
            outcome,
        });
        outcome
    }

    fn direction_toward(&self, watch: &str, target: f64) -> Direction {
        let v = self.problem.quantity(&self.point, watch).unwrap_or(target);
        if v > target {
            Direction::Decrease(watch.to_string())
        } else {
            Direction::Increase(watch.to_string())
        }
    }

    fn trivial_stage(&mut self) -> Result<Status> {
        let (mu1, _) = self.first_labels();
        let mut settings = self.settings;
        settings.detect_bp = true;
        settings.stop_after_bps = self.sched.stop_after_bps;
        let senses = match self.sched.first_direction {
            Some(s) => vec![s],
            None => vec![Sense::Decrease, Sense::Increase],
        };
        for sense in senses {
            let cont = self
                .continuation(self.ps.clone())
                .with_settings(settings)
                .with_event(Event::fold(&mu1));
            let dir = match sense {
                Sense::Increase => Direction::Increase(mu1.clone()),
                Sense::Decrease => Direction::Decrease(mu1.clone()),
            };
            let branch = cont.run(&self.point, &dir)?;
            let has_bp = branch.labeled(Label::BP).next().is_some();
            let terminal = branch.terminal;
            let start = self.point.clone();
            let name = format!(
                "trivial ({})",
                if sense == Sense::Increase {
                    "increasing"
                } else {
                    "decreasing"
                }
            );
            let outcome = self.push(name, None, self.ps.clone(), branch);
            if has_bp {
                self.next += 1;
                return Ok(Status::Continue);
            }
            if matches!(terminal, Terminal::MX | Terminal::GB) {
                return Ok(Status::Halted(outcome));
            }
            self.point = start;
        }
        Err(Error::Schedule(
            "no branch point found along the trivial-multiplier branch".into(),
        ))
    }

    fn chosen_bp(&self) -> Option<Chart> {
        let rec = self
            .records
            .iter()
            .rev()
            .find(|r| r.stage_index == 0 && r.branch.labeled(Label::BP).next().is_some())?;
        let bps: Vec<&Chart> = rec.branch.labeled(Label::BP).collect();
        match self.sched.bp_choice {
            BpChoice::SmallestMu => bps
                .into_iter()
                .min_by(|a, b| a.z.mu[0].total_cmp(&b.z.mu[0]))
                .cloned(),
            BpChoice::Index(n) => bps.get(n).map(|c| (*c).clone()),
        }
    }

    fn secondary_stage(&mut self) -> Result<Status> {
        let (_, nu1) = self.first_labels();
        let cont = self
            .continuation(self.ps.clone())
            .with_event(Event::target(&nu1, 1.0));
        let branch = if self.resume {
            cont.run(&self.point, &Direction::Increase(nu1.clone()))?
        } else {
            let bp = self
                .chosen_bp()
                .ok_or_else(|| Error::Schedule("requested branch point does not exist".into()))?;
            let t2 = cont.switch_branch(&bp, Some(&nu1))?;
            cont.run(&bp.z, &Direction::Tangent(t2))?
        };
        self.finish_stage(
            format!("{nu1} -> 1"),
            Some((nu1.clone(), 1.0)),
            self.ps.clone(),
            branch,
        )
    }

    fn direct_stage(&mut self) -> Result<Status> {
        let (_, nu1) = self.first_labels();
        let cont = self
            .continuation(self.ps.clone())
            .with_event(Event::target(&nu1, 1.0));
        let branch = cont.run(&self.point, &Direction::Increase(nu1.clone()))?;
        self.finish_stage(
            format!("{nu1} -> 1"),
            Some((nu1, 1.0)),
            self.ps.clone(),
            branch,
        )
    }

    fn drive_stage(&mut self, watch: String, release: String) -> Result<Status> {
        let (_, nu1) = self.first_labels();
        let mut ps = self.ps.clone();
        if !ps.is_fixed(&nu1) {
            ps = ps.restrict(&[(nu1.as_str(), 1.0)], &[])?;
        }
        if !self.resume {
            ps = ps.restrict(&[], &[release.as_str()])?;
        }
        let dim = self.problem.manifold_dim(&ps)?;
        if dim != 1 {
            return Err(Error::ManifoldDimension(dim));
        }
        let cont = self
            .continuation(ps.clone())
            .with_event(Event::target(&watch, 0.0))
            .with_event(Event::fold(&watch));
        let dir = self.direction_toward(&watch, 0.0);
        let branch = cont.run(&self.point, &dir)?;
        self.ps = ps.clone();
        let status = self.finish_stage(
            format!("{watch} -> 0"),
            Some((watch.clone(), 0.0)),
            ps,
            branch,
        )?;
        if status == Status::Continue {
            self.ps = self.ps.restrict(&[(watch.as_str(), 0.0)], &[])?;
        }
        Ok(status)
    }

    fn finish_stage(
        &mut self,
        name: String,
        target: Option<(String, f64)>,
        ps: ParameterState,
        branch: Branch,
    ) -> Result<Status> {
        self.ps = ps.clone();
        let outcome = self.push(name, target, ps, branch);
        if outcome == Outcome::Reached {
            self.next += 1;
            self.resume = false;
            Ok(Status::Continue)
        } else {
            self.resume = false;
            Ok(Status::Halted(outcome))
        }
    }

    /// Runs the next stage.
    pub fn step(&mut self) -> Result<Status> {
        let Some(plan) = self.stages.get(self.next).cloned() else {
            return Ok(Status::Done);
        };
        match plan {
            StagePlan::Trivial => self.trivial_stage(),
            StagePlan::Secondary => self.secondary_stage(),
            StagePlan::Direct => self.direct_stage(),
            StagePlan::Drive { watch, release } => self.drive_stage(watch, release),
        }
    }

    /// Runs stages until the schedule completes or halts.
    pub fn run(&mut self) -> Result<Status> {
        loop {
            match self.step()? {
                Status::Continue if self.is_done() => return Ok(Status::Done),
                Status::Continue => continue,
                s => return Ok(s),
            }
        }
    }

    /// Runs the schedule, applying the scripted interventions in order at
    /// MX halts. Returns the status after the script is exhausted.
    pub fn run_scripted(&mut self, script: &[Intervention]) -> Result<Status> {
        let mut pending = script.iter();
        loop {
            let status = self.run()?;
            match status {
                Status::Halted(Outcome::Mx) => match pending.next() {
                    Some(iv) => {
                        if iv.stage.is_some_and(|s| s != self.next) {
                            return Ok(status);
                        }
                        self.activate(iv.activate)?;
                    }
                    None => return Ok(status),
                },
                s => return Ok(s),
            }
        }
    }

    /// Marks that the next [`Driver::step`] continues the halted stage from
    /// the current point instead of restarting it.
    pub fn resume_same_stage(&mut self) {
        self.resume = true;
    }
}

/// Result of one KKT condition check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KktReport {
    pub checks: Vec<Check>,
}

impl KktReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Checks the first-order optimality conditions at `z` with tolerance
/// `1e-8`.
pub fn kkt_check(p: &StagedProblem, z: &AugmentedPoint) -> Result<KktReport> {
    kkt_check_tol(p, z, 1e-8)
}

pub fn kkt_check_tol(p: &StagedProblem, z: &AugmentedPoint, tol: f64) -> Result<KktReport> {
    let vals = p.eval_stages(&z.u)?;
    let max = |it: &mut dyn Iterator<Item = f64>| it.fold(0.0f64, f64::max);
    let norm =
        max(&mut z
            .eta
            .iter()
            .enumerate()
            .map(|(i, &e)| if i == 0 { (e - 1.0).abs() } else { e.abs() }));
    let dual = max(&mut z.sigma.iter().map(|&s| -s));
    let primal = max(&mut vals.g.iter().copied());
    let comp = max(&mut z
        .sigma
        .iter()
        .zip(vals.g.iter())
        .map(|(s, g)| (s * g).abs()));
    let adj = p.adjoint_residual(z)?;
    let phi = vals.phi.amax();
    let mk = |name, value: f64| Check {
        name,
        value,
        pass: value <= tol,
    };
    Ok(KktReport {
        checks: vec![
            mk("normalization", norm),
            mk("dual_feasibility", dual),
            mk("primal_feasibility", primal),
            mk("complementarity", comp),
            mk("adjoint", adj),
            mk("equality", phi),
        ],
    })
}
