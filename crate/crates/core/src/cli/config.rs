//! Run and schedule configuration files (TOML).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::continuation::{Bound, Direction, Event, EventKind, Settings};
use crate::error::{Error, Result};
use crate::successive_driver::Sense;

/// Where a run starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Start {
    /// A named start of the example.
    Named(String),
    /// Explicit unknowns `u`; multipliers start at zero.
    Point(Vec<f64>),
    /// A stored labeled solution, e.g. `2.FP.17`.
    Restart(String),
}

/// An event in a config file. Targets stop the run unless `terminal`
/// says otherwise; folds never stop it by default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventSpec {
    pub kind: EventKind,
    pub watch: String,
    #[serde(default)]
    pub value: f64,
    #[serde(default)]
    pub terminal: Option<bool>,
}

impl EventSpec {
    pub fn to_event(&self) -> Event {
        let mut e = match self.kind {
            EventKind::Fold => Event::fold(&self.watch),
            _ => Event::target(&self.watch, self.value),
        };
        e.kind = self.kind;
        if let Some(t) = self.terminal {
            e.terminal = t;
        }
        e
    }
}

/// Step-size control; unset fields keep their defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Steps {
    pub h0: Option<f64>,
    pub hmax: Option<f64>,
    pub hmin: Option<f64>,
    pub max_steps: Option<usize>,
    pub detect_bp: Option<bool>,
}

impl Steps {
    pub fn apply(&self, base: Settings) -> Settings {
        Settings {
            h0: self.h0.unwrap_or(base.h0),
            h_max: self.hmax.unwrap_or(base.h_max),
            h_min: self.hmin.unwrap_or(base.h_min),
            max_steps: self.max_steps.unwrap_or(base.max_steps),
            detect_bp: self.detect_bp.unwrap_or(base.detect_bp),
            ..base
        }
    }
}

/// One continuation run.
///
/// ```toml
/// problem = "quad2d"
/// start = { named = "u+-" }
/// fix = { kappa_g1 = 8.0, kappa_g2 = 0.0 }
/// release = ["mu_psi1", "nu_psi1"]
/// direction = "+mu_psi1"
/// events = [{ kind = "fold", watch = "mu_psi1" }]
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: String,
    #[serde(default)]
    pub variant: Option<String>,
    pub start: Start,
    /// Inequalities (by label) replaced by `G_k = 0` before the run.
    #[serde(default)]
    pub activate: Vec<String>,
    #[serde(default)]
    pub fix: BTreeMap<String, f64>,
    #[serde(default)]
    pub release: Vec<String>,
    /// `+name` or `-name`; defaults to increasing the first released name.
    #[serde(default)]
    pub direction: Option<String>,
    #[serde(default)]
    pub events: Vec<EventSpec>,
    #[serde(default)]
    pub bounds: Vec<Bound>,
    #[serde(default)]
    pub steps: Steps,
    /// Run number; defaults to one more than the largest stored run.
    #[serde(default)]
    pub run: Option<usize>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

/// A schedule preset with optional overrides.
///
/// ```toml
/// problem = "doedel"
/// schedule = "feasible"
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub problem: String,
    pub schedule: String,
    #[serde(default)]
    pub release_order: Option<Vec<String>>,
    /// Branch point to switch at, counted along the first run from 0;
    /// by default the one with the smallest first monitor.
    #[serde(default)]
    pub bp_index: Option<usize>,
    #[serde(default)]
    pub stop_after_bps: Option<usize>,
    #[serde(default)]
    pub first_direction: Option<Sense>,
    #[serde(default)]
    pub steps: Steps,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

fn parse<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        parse(text)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn direction(&self) -> Result<Direction> {
        match &self.direction {
            Some(d) => parse_direction(d),
            None => self
                .release
                .first()
                .map(|n| Direction::Increase(n.clone()))
                .ok_or_else(|| Error::Config("no `direction` and nothing released".into())),
        }
    }
}

impl ScheduleConfig {
    pub fn parse(text: &str) -> Result<Self> {
        parse(text)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read(path)?)
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// `+name` increases `name`, `-name` decreases it.
pub fn parse_direction(s: &str) -> Result<Direction> {
    let bad = || Error::Config(format!("direction `{s}` is not of the form +name or -name"));
    let (sign, name) = s.split_at_checked(1).ok_or_else(bad)?;
    if name.is_empty() {
        return Err(bad());
    }
    match sign {
        "+" => Ok(Direction::Increase(name.to_string())),
        "-" => Ok(Direction::Decrease(name.to_string())),
        _ => Err(bad()),
    }
}

/// `KKTCONT_OUT` overrides the configured output directory, which
/// defaults to the working directory.
pub fn out_dir(configured: Option<&Path>) -> PathBuf {
    match std::env::var_os("KKTCONT_OUT") {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => configured
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from(".")),
    }
}
