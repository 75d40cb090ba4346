//! Branch tables (CSV) and labeled solution files (JSON).

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::continuation::{Branch, Chart, Label};
use crate::error::{Error, Result};
use crate::staged::{AugmentedPoint, ParameterState, StagedProblem};

/// Name of a stored solution: run number, label and chart id, written
/// `<run>.<LABEL>.<id>` (e.g. `2.FP.17`) and stored as `RUN.2.FP.17.json`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PointName {
    pub run: usize,
    pub label: Label,
    pub id: usize,
}

impl PointName {
    pub fn new(run: usize, label: Label, id: usize) -> Self {
        PointName { run, label, id }
    }

    pub fn file_name(&self) -> String {
        format!("RUN.{self}.json")
    }

    pub fn path(&self, dir: &Path) -> PathBuf {
        dir.join(self.file_name())
    }

    /// Parses a solution file name.
    pub fn from_file_name(name: &str) -> Option<Self> {
        name.strip_prefix("RUN.")?
            .strip_suffix(".json")?
            .parse()
            .ok()
    }
}

impl fmt::Display for PointName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}.{}", self.run, self.label, self.id)
    }
}

impl FromStr for PointName {
    type Err = Error;

    /// Accepts `2.FP.17` and `RUN.2.FP.17`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            Error::Config(format!(
                "`{s}` is not a solution label of the form <run>.<LABEL>.<id>"
            ))
        };
        let t = s.strip_prefix("RUN.").unwrap_or(s);
        let parts: Vec<&str> = t.split('.').collect();
        let [run, label, id] = parts[..] else {
            return Err(bad());
        };
        Ok(PointName::new(
            run.parse().map_err(|_| bad())?,
            label.parse().map_err(|_| bad())?,
            id.parse().map_err(|_| bad())?,
        ))
    }
}

/// A labeled chart with everything needed to restart from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedPoint {
    pub problem: String,
    pub variant: String,
    pub run: usize,
    pub label: Label,
    pub id: usize,
    /// Inequalities replaced by `G_k = 0` in the problem that produced it.
    pub activated: Vec<usize>,
    pub ps: ParameterState,
    pub point: AugmentedPoint,
    pub tangent: Vec<f64>,
    pub h: f64,
}

impl SavedPoint {
    pub fn name(&self) -> PointName {
        PointName::new(self.run, self.label, self.id)
    }

    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        let path = self.name().path(dir);
        std::fs::write(&path, serde_json::to_string_pretty(self)?)?;
        Ok(path)
    }

    pub fn load(dir: &Path, name: &PointName) -> Result<Self> {
        let path = name.path(dir);
        let text = std::fs::read_to_string(&path).map_err(|e| {
            Error::Io(std::io::Error::new(
                e.kind(),
                format!("solution `{name}` ({}): {e}", path.display()),
            ))
        })?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Stored solutions in `dir`, sorted by run, then chart id.
pub fn list(dir: &Path) -> Result<Vec<PointName>> {
    let mut out: Vec<PointName> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .filter_map(|e| PointName::from_file_name(&e.file_name().to_string_lossy()))
        .collect();
    out.sort_by_key(|n| (n.run, n.id));
    Ok(out)
}

/// One more than the largest run number stored in `dir`.
pub fn next_run(dir: &Path) -> Result<usize> {
    if !dir.exists() {
        return Ok(1);
    }
    Ok(list(dir)?.iter().map(|n| n.run).max().unwrap_or(0) + 1)
}

/// Writes every non-regular chart of `branch` as a solution file.
pub fn save_labeled(
    dir: &Path,
    problem: &str,
    variant: &str,
    run: usize,
    activated: &[usize],
    branch: &Branch,
) -> Result<Vec<PointName>> {
    let mut names = Vec::new();
    for c in branch.charts.iter().filter(|c| c.label != Label::RP) {
        let sp = SavedPoint {
            problem: problem.to_string(),
            variant: variant.to_string(),
            run,
            label: c.label,
            id: c.id,
            activated: activated.to_vec(),
            ps: branch.ps.clone(),
            point: c.z.clone(),
            tangent: c.tangent.iter().copied().collect(),
            h: c.h,
        };
        sp.save(dir)?;
        names.push(sp.name());
    }
    Ok(names)
}

/// Full-precision decimal: 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Column names of a branch table: `id, label`, the free parameters in
/// release order, the fixed parameters alphabetically, `norm_u`, the
/// named unknowns, and `t_<name>` for the tangent component of each free
/// parameter.
pub fn columns(p: &StagedProblem, ps: &ParameterState) -> Vec<String> {
    let active = ps.active();
    let mut cols = vec!["id".to_string(), "label".to_string()];
    cols.extend(active.iter().cloned());
    cols.extend(ps.fixed.keys().cloned());
    cols.push("norm_u".into());
    cols.extend(p.named_unknowns().iter().map(|(n, _)| n.clone()));
    cols.extend(active.iter().map(|n| format!("t_{n}")));
    cols
}

fn row(p: &StagedProblem, ps: &ParameterState, c: &Chart) -> Vec<String> {
    let active = ps.active();
    let q = |n: &str| p.quantity(&c.z, n).unwrap_or(f64::NAN);
    let mut r = vec![c.id.to_string(), c.label.to_string()];
    r.extend(active.iter().map(|n| fmt_f64(q(n))));
    r.extend(ps.fixed.keys().map(|n| fmt_f64(q(n))));
    let norm = c.z.u.iter().map(|v| v * v).sum::<f64>().sqrt();
    r.push(fmt_f64(norm));
    r.extend(p.named_unknowns().iter().map(|&(_, i)| fmt_f64(c.z.u[i])));
    r.extend(active.iter().map(|n| {
        let t = p
            .quantity_index(ps, n)
            .map(|i| c.tangent[i])
            .unwrap_or(f64::NAN);
        fmt_f64(t)
    }));
    r
}

/// Writes a branch table.
pub fn write_branch(path: &Path, p: &StagedProblem, branch: &Branch) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(columns(p, &branch.ps)).map_err(csv_err)?;
    for c in &branch.charts {
        w.write_record(row(p, &branch.ps, c)).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// A branch table read back: header and rows of raw fields.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .flexible(false)
            .from_path(path)
            .map_err(csv_err)?;
        let header = r
            .headers()
            .map_err(csv_err)?
            .iter()
            .map(str::to_string)
            .collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|r| r.iter().map(str::to_string).collect()))
            .collect::<std::result::Result<_, _>>()
            .map_err(csv_err)?;
        Ok(Table { header, rows })
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Numeric values of a column; unparsable fields become NaN.
    pub fn values(&self, name: &str) -> Result<Vec<f64>> {
        let k = self
            .column(name)
            .ok_or_else(|| Error::Config(format!("no column `{name}`")))?;
        Ok(self
            .rows
            .iter()
            .map(|r| r[k].parse().unwrap_or(f64::NAN))
            .collect())
    }

    pub fn labels(&self) -> Vec<String> {
        match self.column("label") {
            Some(k) => self.rows.iter().map(|r| r[k].clone()).collect(),
            None => vec!["RP".into(); self.rows.len()],
        }
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}
