//! Command-line front end: runs configured continuation stages and whole
//! schedules, stores restartable labeled solutions and branch tables, and
//! renders projections.
//!
//! Exit codes: 0 when a run ends at its endpoint or a schedule completes,
//! 2 at an MX point, 3 at a domain boundary, 4 when the step budget runs
//! out, 64 for unusable input (bad config, unknown problem or parameter),
//! 66 for a missing stored solution, 70 for a numerical failure.

pub mod config;
pub mod output;
pub mod plot;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::continuation::{Continuation, Direction, Terminal};
use crate::error::Error;
use crate::examples;
use crate::staged::StagedProblem;
use crate::successive_driver::{kkt_check, BpChoice, Driver, Outcome, Status};

use config::{RunConfig, ScheduleConfig, Start};
use output::{PointName, SavedPoint};

pub const EXIT_OK: i32 = 0;
pub const EXIT_MX: i32 = 2;
pub const EXIT_BOUNDARY: i32 = 3;
pub const EXIT_MAX_STEPS: i32 = 4;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_NO_INPUT: i32 = 66;
pub const EXIT_SOFTWARE: i32 = 70;

#[derive(Debug, Parser)]
#[command(
    name = "kktcont",
    version,
    about = "Successive continuation to KKT points"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Execute one continuation run described by a config file.
    Run { config: PathBuf },
    /// Execute a schedule preset described by a config file.
    Schedule { config: PathBuf },
    /// Render an x-y projection of branch tables as SVG.
    Plot {
        #[arg(long)]
        x: String,
        #[arg(long)]
        y: String,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// List the stored solution labels.
    List {
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Print problem dimensions and presets.
    Info {
        problem: String,
        #[arg(long)]
        variant: Option<String>,
    },
}

/// A failure with the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Config(_)
            | Error::UnknownProblem(_)
            | Error::UnknownParameter(_)
            | Error::ParameterConflict(_)
            | Error::ManifoldDimension(_)
            | Error::Schedule(_)
            | Error::Json(_) => EXIT_USAGE,
            Error::Io(io) if io.kind() == std::io::ErrorKind::NotFound => EXIT_NO_INPUT,
            _ => EXIT_SOFTWARE,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn usage(message: String) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message,
    }
}

/// Parses `args` (including the program name), executes the command and
/// returns the exit code. Output goes to stdout, diagnostics to stderr.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

/// Writes to stdout, ignoring a closed pipe.
fn say(s: &str) {
    use std::io::Write;
    let _ = std::io::stdout().write_all(s.as_bytes());
}

pub fn execute(cmd: &Command) -> CliResult<i32> {
    match cmd {
        Command::Run { config } => {
            let cfg = RunConfig::load(config)?;
            let out = config::out_dir(cfg.out_dir.as_deref());
            let report = cmd_run(&cfg, &out)?;
            say(&format!("{}\n", report.summary()));
            Ok(report.exit_code())
        }
        Command::Schedule { config } => {
            let cfg = ScheduleConfig::load(config)?;
            let out = config::out_dir(cfg.out_dir.as_deref());
            let report = cmd_schedule(&cfg, &out)?;
            say(&report.table());
            Ok(report.exit_code())
        }
        Command::Plot {
            x,
            y,
            output,
            files,
        } => {
            let svg = plot::plot_files(files, x, y)?;
            std::fs::write(output, svg).map_err(Error::from)?;
            Ok(EXIT_OK)
        }
        Command::List { out_dir } => {
            let dir = config::out_dir(out_dir.as_deref());
            for n in output::list(&dir)? {
                say(&format!("{n}\n"));
            }
            Ok(EXIT_OK)
        }
        Command::Info { problem, variant } => {
            say(&info(problem, variant.as_deref())?);
            Ok(EXIT_OK)
        }
    }
}

/// Result of [`cmd_run`].
#[derive(Debug, Clone)]
pub struct RunReport {
    pub run: usize,
    pub terminal: Terminal,
    pub charts: usize,
    pub saved: Vec<PointName>,
    pub branch_file: PathBuf,
}

impl RunReport {
    pub fn exit_code(&self) -> i32 {
        match self.terminal {
            Terminal::EP => EXIT_OK,
            Terminal::MX => EXIT_MX,
            Terminal::GB => EXIT_BOUNDARY,
            Terminal::MaxSteps => EXIT_MAX_STEPS,
        }
    }

    pub fn summary(&self) -> String {
        let labels: Vec<String> = self.saved.iter().map(|n| n.to_string()).collect();
        format!(
            "run {}: {} after {} charts; saved {}",
            self.run,
            self.terminal,
            self.charts,
            labels.join(" ")
        )
    }
}

fn activate_labels(mut p: StagedProblem, labels: &[String]) -> CliResult<StagedProblem> {
    for l in labels {
        let k = p
            .ineq_labels()
            .iter()
            .position(|x| x == l)
            .ok_or_else(|| usage(format!("unknown inequality `{l}`")))?;
        p = p.activate_constraint(k)?;
    }
    Ok(p)
}

/// Executes one continuation run and writes `branch.csv`,
/// `branch.<run>.csv` and one solution file per labeled chart into `out`.
pub fn cmd_run(cfg: &RunConfig, out: &Path) -> CliResult<RunReport> {
    let def = examples::find(&cfg.problem)?;
    let variant = cfg
        .variant
        .clone()
        .unwrap_or_else(|| def.variants[0].to_string());
    let mut p = examples::build(&cfg.problem, Some(&variant))?;
    let mut z = match &cfg.start {
        Start::Named(s) => p.trivial_point(&examples::start(&cfg.problem, Some(&variant), s)?)?,
        Start::Point(u) => {
            if u.len() != p.n_u() {
                return Err(usage(format!(
                    "start point has {} entries, `{}` has {} unknowns",
                    u.len(),
                    cfg.problem,
                    p.n_u()
                )));
            }
            p.trivial_point(u)?
        }
        Start::Restart(label) => {
            let name: PointName = label.parse()?;
            let sp = SavedPoint::load(out, &name)?;
            if sp.problem != cfg.problem || sp.variant != variant {
                return Err(usage(format!(
                    "solution `{name}` belongs to {} ({}), not {} ({variant})",
                    sp.problem, sp.variant, cfg.problem
                )));
            }
            for &k in &sp.activated {
                p = p.activate_constraint(k)?;
            }
            sp.point
        }
    };
    p = activate_labels(p, &cfg.activate)?;
    let fix: Vec<(&str, f64)> = cfg.fix.iter().map(|(k, &v)| (k.as_str(), v)).collect();
    let release: Vec<&str> = cfg.release.iter().map(String::as_str).collect();
    let ps = p.param_state().restrict(&fix, &release)?;
    for &(name, v) in &fix {
        let r = p
            .param_ref(name)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))?;
        z.set_param(r, v);
    }
    let dim = p.manifold_dim(&ps)?;
    if dim != 1 {
        return Err(Error::ManifoldDimension(dim).into());
    }
    let known = |n: &str| -> CliResult<()> {
        if p.has_quantity(n) {
            Ok(())
        } else {
            Err(Error::UnknownParameter(n.to_string()).into())
        }
    };
    for e in &cfg.events {
        known(&e.watch)?;
    }
    for b in &cfg.bounds {
        known(&b.name)?;
    }
    let dir = cfg.direction()?;
    if let Direction::Increase(n) | Direction::Decrease(n) = &dir {
        known(n)?;
    }

    let mut cont = Continuation::new(&p, ps)
        .with_settings(cfg.steps.apply(Default::default()))
        .with_bounds(cfg.bounds.clone());
    for e in &cfg.events {
        cont = cont.with_event(e.to_event());
    }
    let branch = cont.run(&z, &dir)?;

    std::fs::create_dir_all(out).map_err(Error::from)?;
    let run = match cfg.run {
        Some(n) => n,
        None => output::next_run(out)?,
    };
    let activated: Vec<usize> = p.activated().iter().copied().collect();
    let saved = output::save_labeled(out, &cfg.problem, &variant, run, &activated, &branch)?;
    let branch_file = out.join(format!("branch.{run}.csv"));
    output::write_branch(&branch_file, &p, &branch)?;
    std::fs::copy(&branch_file, out.join("branch.csv")).map_err(Error::from)?;
    Ok(RunReport {
        run,
        terminal: branch.terminal,
        charts: branch.charts.len(),
        saved,
        branch_file,
    })
}

/// One row of the schedule summary.
#[derive(Debug, Clone)]
pub struct StageRow {
    pub stage: usize,
    pub name: String,
    pub target: Option<(String, f64)>,
    pub reached: Option<f64>,
    pub outcome: Outcome,
    pub endpoint: Vec<(String, f64)>,
}

/// Result of [`cmd_schedule`].
#[derive(Debug, Clone)]
pub struct ScheduleReport {
    pub status: Status,
    pub rows: Vec<StageRow>,
    pub kkt_pass: Option<bool>,
}

impl ScheduleReport {
    pub fn exit_code(&self) -> i32 {
        match self.status {
            Status::Done | Status::Continue => EXIT_OK,
            Status::Halted(Outcome::Mx) => EXIT_MX,
            Status::Halted(Outcome::Boundary) => EXIT_BOUNDARY,
            Status::Halted(_) => EXIT_MAX_STEPS,
        }
    }

    /// Human-readable summary table.
    pub fn table(&self) -> String {
        let mut s = String::new();
        for r in &self.rows {
            let target = r
                .target
                .as_ref()
                .map(|(n, v)| format!("{n}={v}"))
                .unwrap_or_else(|| "-".into());
            let reached = r
                .reached
                .map(|v| format!("{v:.6e}"))
                .unwrap_or_else(|| "-".into());
            let end: Vec<String> = r
                .endpoint
                .iter()
                .map(|(n, v)| format!("{n}={v:.6}"))
                .collect();
            s.push_str(&format!(
                "{:>3} {:<28} {:<18} {:<14} {:<9} {}\n",
                r.stage,
                r.name,
                target,
                reached,
                format!("{:?}", r.outcome),
                end.join(" ")
            ));
        }
        s.push_str(&format!("stages: {}\n", self.rows.len()));
        if let Some(pass) = self.kkt_pass {
            s.push_str(&format!("kkt: {}\n", if pass { "pass" } else { "fail" }));
        }
        s
    }
}

fn endpoint_quantities(p: &StagedProblem, z: &crate::staged::AugmentedPoint) -> Vec<(String, f64)> {
    let mut out: Vec<(String, f64)> = p
        .named_unknowns()
        .iter()
        .map(|(n, i)| (n.clone(), z.u[*i]))
        .collect();
    for (l, &m) in p.monitor_labels().iter().zip(&z.mu) {
        out.push((format!("mu_{l}"), m));
    }
    for (l, &s) in p.ineq_labels().iter().zip(&z.sigma) {
        out.push((format!("sigma_{l}"), s));
    }
    out
}

/// Executes a schedule preset; each stage `k` (from 1) writes
/// `branch.<k>.csv` and solution files of run `k`, and the summary goes
/// to `summary.csv`.
pub fn cmd_schedule(cfg: &ScheduleConfig, out: &Path) -> CliResult<ScheduleReport> {
    let preset = examples::preset(&cfg.problem, &cfg.schedule)?;
    let mut sched = preset.schedule;
    if let Some(order) = &cfg.release_order {
        for n in order {
            if preset.problem.param_ref(n).is_none() {
                return Err(Error::UnknownParameter(n.clone()).into());
            }
        }
        sched.release_order = order.clone();
    }
    if let Some(k) = cfg.bp_index {
        sched.bp_choice = BpChoice::Index(k);
    }
    if cfg.stop_after_bps.is_some() {
        sched.stop_after_bps = cfg.stop_after_bps;
    }
    if cfg.first_direction.is_some() {
        sched.first_direction = cfg.first_direction;
    }
    let mut d = Driver::new(&preset.problem, sched)?
        .with_settings(cfg.steps.apply(preset.settings))
        .with_bounds(preset.bounds);
    let status = d.run_scripted(&preset.script)?;

    std::fs::create_dir_all(out).map_err(Error::from)?;
    let mut rows = Vec::new();
    let mut csv_rows = vec![];
    for (k, rec) in d.records().iter().enumerate() {
        let stage = k + 1;
        let p = if rec.activated.is_empty() {
            preset.problem.clone()
        } else {
            let mut p = preset.problem.clone();
            for &a in &rec.activated {
                p = p.activate_constraint(a)?;
            }
            p
        };
        output::save_labeled(
            out,
            &cfg.problem,
            preset.variant,
            stage,
            &rec.activated,
            &rec.branch,
        )?;
        output::write_branch(&out.join(format!("branch.{stage}.csv")), &p, &rec.branch)?;
        let z = rec.endpoint();
        let reached = rec.target.as_ref().and_then(|(n, _)| p.quantity(z, n));
        let endpoint = endpoint_quantities(&p, z);
        let mut line = vec![
            stage.to_string(),
            rec.name.clone(),
            rec.target.as_ref().map(|t| t.0.clone()).unwrap_or_default(),
            rec.target
                .as_ref()
                .map(|t| output::fmt_f64(t.1))
                .unwrap_or_default(),
            reached.map(output::fmt_f64).unwrap_or_default(),
            format!("{:?}", rec.outcome),
        ];
        line.extend(
            endpoint
                .iter()
                .map(|(n, v)| format!("{n}={}", output::fmt_f64(*v))),
        );
        csv_rows.push(line);
        rows.push(StageRow {
            stage,
            name: rec.name.clone(),
            target: rec.target.clone(),
            reached,
            outcome: rec.outcome,
            endpoint,
        });
    }
    let mut w = csv::WriterBuilder::new()
        .flexible(true)
        .from_path(out.join("summary.csv"))
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e.to_string()));
    w.write_record([
        "stage",
        "name",
        "target",
        "target_value",
        "reached",
        "outcome",
        "endpoint",
    ])
    .map_err(io)?;
    for r in csv_rows {
        w.write_record(r).map_err(io)?;
    }
    w.flush().map_err(Error::from)?;
    let kkt_pass = match (status, d.records().last()) {
        (Status::Done, Some(r)) => Some(kkt_check(d.problem(), r.endpoint())?.pass()),
        _ => None,
    };
    Ok(ScheduleReport {
        status,
        rows,
        kkt_pass,
    })
}

/// Dimensions `d` (of the equality manifold), `l` (monitors), `q`
/// (inequalities) and the registered presets of a problem.
pub fn info(problem: &str, variant: Option<&str>) -> CliResult<String> {
    let def = examples::find(problem)?;
    let p = examples::build(problem, variant)?;
    let mut s = String::new();
    s.push_str(&format!("problem  {} ({})\n", def.name, def.summary));
    s.push_str(&format!(
        "variant  {}\n",
        variant.unwrap_or(def.variants[0])
    ));
    s.push_str(&format!("d        {}\n", p.manifold_dim_phi()));
    s.push_str(&format!("l        {}\n", p.n_monitors()));
    s.push_str(&format!("q        {}\n", p.n_ineq()));
    s.push_str(&format!("n_u      {}\n", p.n_u()));
    s.push_str(&format!("monitors {}\n", p.monitor_labels().join(" ")));
    s.push_str(&format!("ineqs    {}\n", p.ineq_labels().join(" ")));
    s.push_str(&format!("params   {}\n", p.param_names().join(" ")));
    s.push_str(&format!("variants {}\n", def.variants.join(" ")));
    s.push_str(&format!("starts   {}\n", def.starts.join(" ")));
    s.push_str(&format!("schedules {}\n", def.schedules.join(" ")));
    Ok(s)
}
