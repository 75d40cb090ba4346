use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which continuation parameters are held fixed (and at what value) and
/// which are released as unknowns.
///
/// Parameters that are neither fixed nor explicitly released are free as
/// well; they follow the explicitly released ones in declaration order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterState {
    names: Vec<String>,
    pub fixed: BTreeMap<String, f64>,
    pub released: Vec<String>,
}

impl ParameterState {
    /// State over the given parameter names with nothing fixed.
    pub fn new(names: Vec<String>) -> Self {
        ParameterState {
            names,
            fixed: BTreeMap::new(),
            released: Vec::new(),
        }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn contains(&self, name: &str) -> bool {
        self.names.iter().any(|n| n == name)
    }

    pub fn is_fixed(&self, name: &str) -> bool {
        self.fixed.contains_key(name)
    }

    pub fn fixed_value(&self, name: &str) -> Option<f64> {
        self.fixed.get(name).copied()
    }

    /// Free parameters in column order: the released list, then every other
    /// non-fixed parameter in declaration order.
    pub fn active(&self) -> Vec<String> {
        let mut out = self.released.clone();
        for n in &self.names {
            if !self.fixed.contains_key(n) && !out.contains(n) {
                out.push(n.clone());
            }
        }
        out
    }

    /// Fixes the listed parameters at the given values and releases the
    /// listed names (appending them to the released list).
    pub fn restrict(&self, fix: &[(&str, f64)], release: &[&str]) -> Result<Self> {
        let mut seen: BTreeMap<&str, f64> = BTreeMap::new();
        for &(name, value) in fix {
            if !self.contains(name) {
                return Err(Error::UnknownParameter(name.to_string()));
            }
            if let Some(prev) = seen.insert(name, value) {
                if prev != value {
                    return Err(Error::ParameterConflict(format!(
                        "`{name}` fixed at both {prev} and {value}"
                    )));
                }
            }
        }
        let mut rel: BTreeSet<&str> = BTreeSet::new();
        for &name in release {
            if !self.contains(name) {
                return Err(Error::UnknownParameter(name.to_string()));
            }
            if seen.contains_key(name) {
                return Err(Error::ParameterConflict(format!(
                    "`{name}` is both fixed and released"
                )));
            }
            rel.insert(name);
        }
        let mut out = self.clone();
        for (name, value) in seen {
            out.released.retain(|n| n != name);
            out.fixed.insert(name.to_string(), value);
        }
        for &name in release {
            out.fixed.remove(name);
            if !out.released.iter().any(|n| n == name) {
                out.released.push(name.to_string());
            }
        }
        Ok(out)
    }

    /// Drops every name that is not in `names` and adopts the new name list.
    pub fn rebind(&self, names: Vec<String>) -> Self {
        let keep: BTreeSet<&String> = names.iter().collect();
        ParameterState {
            fixed: self
                .fixed
                .iter()
                .filter(|(k, _)| keep.contains(k))
                .map(|(k, v)| (k.clone(), *v))
                .collect(),
            released: self
                .released
                .iter()
                .filter(|n| keep.contains(n))
                .cloned()
                .collect(),
            names,
        }
    }
}
