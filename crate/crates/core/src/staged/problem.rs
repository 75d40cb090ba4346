use std::collections::BTreeSet;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::params::ParameterState;
use super::stage::{Stage, StageKind};
use crate::complementarity::{fb_chi, fb_chi_grad};
use crate::error::{Error, Result};

/// Which blocks of the augmented system are assembled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Form {
    /// `(Φ(u); Ψ(u) − μ)` over `(u, μ)`.
    Original,
    /// Adds the adjoint conditions and `η − ν` over `(u, λ, η, μ, ν)`.
    Expanded,
    /// Adds inequality functions: `G(u) − ξ` and `K(σ, −G(u)) − κ`.
    FurtherExpanded,
}

/// Reference to one continuation parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamRef {
    Mu(usize),
    Nu(usize),
    Xi(usize),
    Kappa(usize),
}

/// All unknowns of the augmented system, including fixed parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedPoint {
    pub u: Vec<f64>,
    pub lambda: Vec<f64>,
    pub eta: Vec<f64>,
    pub sigma: Vec<f64>,
    pub mu: Vec<f64>,
    pub nu: Vec<f64>,
    pub xi: Vec<f64>,
    pub kappa: Vec<f64>,
}

impl AugmentedPoint {
    pub fn param(&self, r: ParamRef) -> f64 {
        match r {
            ParamRef::Mu(i) => self.mu[i],
            ParamRef::Nu(i) => self.nu[i],
            ParamRef::Xi(i) => self.xi[i],
            ParamRef::Kappa(i) => self.kappa[i],
        }
    }

    pub fn set_param(&mut self, r: ParamRef, v: f64) {
        match r {
            ParamRef::Mu(i) => self.mu[i] = v,
            ParamRef::Nu(i) => self.nu[i] = v,
            ParamRef::Xi(i) => self.xi[i] = v,
            ParamRef::Kappa(i) => self.kappa[i] = v,
        }
    }
}

/// Metadata returned with an assembled Jacobian.
#[derive(Debug, Clone, Default)]
pub struct JacobianMeta {
    /// Inequalities whose pair `(σᵢ, −Gᵢ)` sits at the kink of `χ`.
    pub singular_ncp: Vec<usize>,
}

#[derive(Clone)]
struct Entry {
    stage: Arc<Stage>,
    inputs: Vec<usize>,
    offset: usize,
}

/// Function values of all stages at one `u`.
#[derive(Debug, Clone)]
pub struct StageValues {
    pub phi: DVector<f64>,
    pub psi: DVector<f64>,
    pub g: DVector<f64>,
}

/// A problem built stage by stage; multipliers and continuation parameters
/// are implied by the registered zero, monitor and inequality functions.
#[derive(Clone)]
pub struct StagedProblem {
    name: String,
    form: Form,
    entries: Vec<Entry>,
    n_u: usize,
    n_phi: usize,
    monitor_labels: Vec<String>,
    ineq_labels: Vec<String>,
    active: BTreeSet<usize>,
    named_unknowns: Vec<(String, usize)>,
}

impl std::fmt::Debug for StagedProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StagedProblem")
            .field("name", &self.name)
            .field("form", &self.form)
            .field("n_u", &self.n_u)
            .field("n_phi", &self.n_phi)
            .field("monitors", &self.monitor_labels)
            .field("inequalities", &self.ineq_labels)
            .field("activated", &self.active)
            .finish()
    }
}

fn gather(u: &[f64], idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&i| u[i]).collect()
}

impl StagedProblem {
    pub fn new(name: &str, form: Form) -> Self {
        StagedProblem {
            name: name.to_string(),
            form,
            entries: Vec::new(),
            n_u: 0,
            n_phi: 0,
            monitor_labels: Vec::new(),
            ineq_labels: Vec::new(),
            active: BTreeSet::new(),
            named_unknowns: Vec::new(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn form(&self) -> Form {
        self.form
    }

    /// Same stages assembled in a different form. Inequality stages are
    /// dropped for forms that do not carry them.
    pub fn with_form(&self, form: Form) -> Self {
        let mut p = self.clone();
        p.form = form;
        if form != Form::FurtherExpanded {
            p.entries.retain(|e| e.stage.kind != StageKind::Inequality);
            p.ineq_labels.clear();
            p.active.clear();
        }
        p
    }

    pub fn add_stage(&mut self, stage: Stage) -> Result<()> {
        if self.entries.iter().any(|e| e.stage.name == stage.name) {
            return Err(Error::stage(&stage.name, "duplicate stage name"));
        }
        if let Some(&bad) = stage.deps.iter().find(|&&i| i >= self.n_u) {
            return Err(Error::stage(
                &stage.name,
                format!(
                    "depends on unknown {bad}, only {} declared so far",
                    self.n_u
                ),
            ));
        }
        if stage.labels.len() != stage.dim_out {
            return Err(Error::stage(
                &stage.name,
                "one label per output is required",
            ));
        }
        if stage.kind == StageKind::Inequality && self.form != Form::FurtherExpanded {
            return Err(Error::stage(
                &stage.name,
                "inequality stages need the further-expanded form",
            ));
        }
        let offset = match stage.kind {
            StageKind::Zero => self.n_phi,
            StageKind::Monitor => self.monitor_labels.len(),
            StageKind::Inequality => self.ineq_labels.len(),
        };
        let labels = match stage.kind {
            StageKind::Zero => None,
            StageKind::Monitor => Some(&self.monitor_labels),
            StageKind::Inequality => Some(&self.ineq_labels),
        };
        if let Some(existing) = labels {
            if let Some(l) = stage.labels.iter().find(|l| existing.contains(l)) {
                return Err(Error::stage(&stage.name, format!("duplicate label `{l}`")));
            }
        }
        let mut inputs = stage.deps.clone();
        inputs.extend(self.n_u..self.n_u + stage.new_unknowns);
        self.n_u += stage.new_unknowns;
        match stage.kind {
            StageKind::Zero => self.n_phi += stage.dim_out,
            StageKind::Monitor => self.monitor_labels.extend(stage.labels.iter().cloned()),
            StageKind::Inequality => self.ineq_labels.extend(stage.labels.iter().cloned()),
        }
        self.entries.push(Entry {
            stage: Arc::new(stage),
            inputs,
            offset,
        });
        Ok(())
    }

    pub fn with_stage(mut self, stage: Stage) -> Result<Self> {
        self.add_stage(stage)?;
        Ok(self)
    }

    /// Gives a name to one component of `u` so it can be watched and
    /// written to branch files.
    pub fn name_unknown(&mut self, name: &str, index: usize) {
        self.named_unknowns.push((name.to_string(), index));
    }

    pub fn named_unknowns(&self) -> &[(String, usize)] {
        &self.named_unknowns
    }

    pub fn stages(&self) -> impl Iterator<Item = (&Stage, &[usize])> {
        self.entries
            .iter()
            .map(|e| (&*e.stage, e.inputs.as_slice()))
    }

    pub fn n_u(&self) -> usize {
        self.n_u
    }
    pub fn n_phi(&self) -> usize {
        self.n_phi
    }
    pub fn n_monitors(&self) -> usize {
        self.monitor_labels.len()
    }
    pub fn n_ineq(&self) -> usize {
        self.ineq_labels.len()
    }
    pub fn monitor_labels(&self) -> &[String] {
        &self.monitor_labels
    }
    pub fn ineq_labels(&self) -> &[String] {
        &self.ineq_labels
    }

    /// Dimension of the solution manifold of `Φ = 0` for a full-rank `DΦ`.
    pub fn manifold_dim_phi(&self) -> usize {
        self.n_u.saturating_sub(self.n_phi)
    }

    pub fn activated(&self) -> &BTreeSet<usize> {
        &self.active
    }

    fn has_adjoint(&self) -> bool {
        self.form != Form::Original
    }

    fn has_ineq(&self) -> bool {
        self.form == Form::FurtherExpanded
    }

    /// Length of `(u, λ, η, σ)` for this form.
    pub fn core_len(&self) -> usize {
        match self.form {
            Form::Original => self.n_u,
            Form::Expanded => self.n_u + self.n_phi + self.n_monitors(),
            Form::FurtherExpanded => self.n_u + self.n_phi + self.n_monitors() + self.n_ineq(),
        }
    }

    pub fn n_rows(&self) -> usize {
        let (l, q) = (self.n_monitors(), self.n_ineq());
        match self.form {
            Form::Original => self.n_phi + l,
            Form::Expanded => self.n_phi + l + self.n_u + l,
            Form::FurtherExpanded => self.n_phi + l + self.n_u + l + q + q,
        }
    }

    /// Total number of unknowns counting every parameter as free.
    pub fn n_unknowns(&self) -> usize {
        self.core_len() + self.param_names().len()
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .monitor_labels
            .iter()
            .map(|l| format!("mu_{l}"))
            .collect();
        if self.has_adjoint() {
            out.extend(self.monitor_labels.iter().map(|l| format!("nu_{l}")));
        }
        if self.has_ineq() {
            out.extend(self.ineq_labels.iter().map(|l| format!("xi_{l}")));
            out.extend(
                self.ineq_labels
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| !self.active.contains(k))
                    .map(|(_, l)| format!("kappa_{l}")),
            );
        }
        out
    }

    pub fn param_ref(&self, name: &str) -> Option<ParamRef> {
        let find = |labels: &[String], suffix: &str| labels.iter().position(|l| l == suffix);
        if let Some(s) = name.strip_prefix("mu_") {
            return find(&self.monitor_labels, s).map(ParamRef::Mu);
        }
        if let Some(s) = name.strip_prefix("nu_") {
            return find(&self.monitor_labels, s)
                .filter(|_| self.has_adjoint())
                .map(ParamRef::Nu);
        }
        if let Some(s) = name.strip_prefix("xi_") {
            return find(&self.ineq_labels, s)
                .filter(|_| self.has_ineq())
                .map(ParamRef::Xi);
        }
        if let Some(s) = name.strip_prefix("kappa_") {
            return find(&self.ineq_labels, s)
                .filter(|k| self.has_ineq() && !self.active.contains(k))
                .map(ParamRef::Kappa);
        }
        None
    }

    pub fn param_state(&self) -> ParameterState {
        ParameterState::new(self.param_names())
    }

    fn check_state(&self, ps: &ParameterState) -> Result<()> {
        if ps.names() != self.param_names().as_slice() {
            return Err(Error::ParameterConflict(format!(
                "parameter state does not belong to problem `{}`",
                self.name
            )));
        }
        Ok(())
    }

    /// Number of free unknowns minus number of equations.
    pub fn manifold_dim(&self, ps: &ParameterState) -> Result<isize> {
        self.check_state(ps)?;
        Ok((self.core_len() + ps.active().len()) as isize - self.n_rows() as isize)
    }

    /// Evaluates every stage at `u`.
    pub fn eval_stages(&self, u: &[f64]) -> Result<StageValues> {
        if u.len() != self.n_u {
            return Err(Error::Dimension(format!(
                "u has length {}, expected {}",
                u.len(),
                self.n_u
            )));
        }
        let mut phi = DVector::zeros(self.n_phi);
        let mut psi = DVector::zeros(self.n_monitors());
        let mut g = DVector::zeros(self.n_ineq());
        for e in &self.entries {
            let v = e.stage.eval(&gather(u, &e.inputs))?;
            let target = match e.stage.kind {
                StageKind::Zero => &mut phi,
                StageKind::Monitor => &mut psi,
                StageKind::Inequality => &mut g,
            };
            target.rows_mut(e.offset, v.len()).copy_from(&v);
        }
        Ok(StageValues { phi, psi, g })
    }

    /// Point with vanishing multipliers at `u`: `μ = Ψ(u)`, `ν = 0`,
    /// `ξ = G(u)`, `κ = χ(0, −G(u))`.
    pub fn trivial_point(&self, u: &[f64]) -> Result<AugmentedPoint> {
        let v = self.eval_stages(u)?;
        let kappa =
            v.g.iter()
                .enumerate()
                .map(|(k, &gk)| {
                    if self.active.contains(&k) {
                        0.0
                    } else {
                        fb_chi(0.0, -gk)
                    }
                })
                .collect();
        Ok(AugmentedPoint {
            u: u.to_vec(),
            lambda: vec![0.0; self.n_phi],
            eta: vec![0.0; self.n_monitors()],
            sigma: vec![0.0; self.n_ineq()],
            mu: v.psi.iter().copied().collect(),
            nu: vec![0.0; self.n_monitors()],
            xi: v.g.iter().copied().collect(),
            kappa,
        })
    }

    fn check_point(&self, z: &AugmentedPoint) -> Result<()> {
        let (l, q) = (self.n_monitors(), self.n_ineq());
        let ok = z.u.len() == self.n_u
            && z.lambda.len() == self.n_phi
            && z.eta.len() == l
            && z.sigma.len() == q
            && z.mu.len() == l
            && z.nu.len() == l
            && z.xi.len() == q
            && z.kappa.len() == q;
        if ok {
            Ok(())
        } else {
            Err(Error::Dimension(format!(
                "augmented point does not match problem `{}`",
                self.name
            )))
        }
    }

    /// Flattens `(u, λ, η, σ)` and the free parameters of `ps`.
    pub fn pack(&self, z: &AugmentedPoint, ps: &ParameterState) -> Result<DVector<f64>> {
        self.check_point(z)?;
        self.check_state(ps)?;
        let mut x = Vec::with_capacity(self.core_len() + ps.active().len());
        x.extend_from_slice(&z.u);
        if self.has_adjoint() {
            x.extend_from_slice(&z.lambda);
            x.extend_from_slice(&z.eta);
        }
        if self.has_ineq() {
            x.extend_from_slice(&z.sigma);
        }
        for name in ps.active() {
            let r = self
                .param_ref(&name)
                .ok_or_else(|| Error::UnknownParameter(name.clone()))?;
            x.push(z.param(r));
        }
        Ok(DVector::from_vec(x))
    }

    /// Inverse of [`StagedProblem::pack`]; fixed parameters take their
    /// values from `ps`, parameters absent from the problem from `template`.
    pub fn unpack(
        &self,
        x: &DVector<f64>,
        ps: &ParameterState,
        template: &AugmentedPoint,
    ) -> Result<AugmentedPoint> {
        let active = ps.active();
        if x.len() != self.core_len() + active.len() {
            return Err(Error::Dimension(format!(
                "continuation vector has length {}, expected {}",
                x.len(),
                self.core_len() + active.len()
            )));
        }
        let mut z = template.clone();
        let mut at = 0;
        let mut take = |dst: &mut Vec<f64>, n: usize| {
            dst.clear();
            dst.extend(x.rows(at, n).iter());
            at += n;
        };
        take(&mut z.u, self.n_u);
        if self.has_adjoint() {
            take(&mut z.lambda, self.n_phi);
            take(&mut z.eta, self.n_monitors());
        }
        if self.has_ineq() {
            take(&mut z.sigma, self.n_ineq());
        }
        for (k, name) in active.iter().enumerate() {
            let r = self
                .param_ref(name)
                .ok_or_else(|| Error::UnknownParameter(name.clone()))?;
            z.set_param(r, x[self.core_len() + k]);
        }
        for (name, &v) in &ps.fixed {
            if let Some(r) = self.param_ref(name) {
                z.set_param(r, v);
            }
        }
        Ok(z)
    }

    /// Residual of the augmented system, rows stacked as
    /// `Φ; Ψ − μ; adjoint; η − ν; G − ξ; K(σ, −G) − κ` (truncated per form).
    pub fn assemble_residual(&self, z: &AugmentedPoint) -> Result<DVector<f64>> {
        Ok(self.linearize(z, None)?.0)
    }

    /// Jacobian of [`StagedProblem::assemble_residual`] with respect to
    /// `(u, λ, η, σ)` and the free parameters of `ps`.
    pub fn assemble_jacobian(
        &self,
        z: &AugmentedPoint,
        ps: &ParameterState,
    ) -> Result<(DMatrix<f64>, JacobianMeta)> {
        let (_, j, meta) = self.linearize(z, Some(ps))?;
        Ok((j.expect("jacobian requested"), meta))
    }

    /// Residual and (optionally) restricted Jacobian in one pass.
    pub fn linearize(
        &self,
        z: &AugmentedPoint,
        ps: Option<&ParameterState>,
    ) -> Result<(DVector<f64>, Option<DMatrix<f64>>, JacobianMeta)> {
        self.check_point(z)?;
        if let Some(ps) = ps {
            self.check_state(ps)?;
        }
        let (n_u, n_phi, l, q) = (self.n_u, self.n_phi, self.n_monitors(), self.n_ineq());
        let adj = self.has_adjoint();
        let ineq = self.has_ineq();

        let r_psi = n_phi;
        let r_adj = r_psi + l;
        let r_eta = r_adj + n_u;
        let r_g = r_eta + l;
        let r_ncp = r_g + q;

        let c_lam = n_u;
        let c_eta = c_lam + n_phi;
        let c_sig = c_eta + l;
        let active = ps.map(|p| p.active()).unwrap_or_default();
        let n_cols = self.core_len() + active.len();

        let mut f = DVector::zeros(self.n_rows());
        let mut jac = ps.map(|_| DMatrix::zeros(self.n_rows(), n_cols));
        let mut meta = JacobianMeta::default();
        let mut g_vals = vec![0.0; q];
        let mut g_jac: Vec<(usize, DMatrix<f64>, Vec<usize>)> = Vec::new();

        for e in &self.entries {
            let st = &*e.stage;
            let x = gather(&z.u, &e.inputs);
            let v = st.eval(&x)?;
            let need_derivs = adj || jac.is_some();
            let dj = if need_derivs {
                Some(st.jacobian(&x)?)
            } else {
                None
            };
            let (row0, mult_col0, w): (usize, usize, &[f64]) = match st.kind {
                StageKind::Zero => (
                    e.offset,
                    c_lam + e.offset,
                    &z.lambda[e.offset..e.offset + st.dim_out],
                ),
                StageKind::Monitor => (
                    r_psi + e.offset,
                    c_eta + e.offset,
                    &z.eta[e.offset..e.offset + st.dim_out],
                ),
                StageKind::Inequality => (
                    r_g + e.offset,
                    c_sig + e.offset,
                    &z.sigma[e.offset..e.offset + st.dim_out],
                ),
            };
            // function rows
            match st.kind {
                StageKind::Zero => f.rows_mut(row0, st.dim_out).copy_from(&v),
                StageKind::Monitor => {
                    for i in 0..st.dim_out {
                        f[row0 + i] = v[i] - z.mu[e.offset + i];
                    }
                }
                StageKind::Inequality => {
                    for i in 0..st.dim_out {
                        f[row0 + i] = v[i] - z.xi[e.offset + i];
                        g_vals[e.offset + i] = v[i];
                    }
                }
            }
            if let (Some(j), Some(dj)) = (jac.as_mut(), dj.as_ref()) {
                for (c, &col) in e.inputs.iter().enumerate() {
                    for i in 0..st.dim_out {
                        j[(row0 + i, col)] += dj[(i, c)];
                    }
                }
            }
            if st.kind == StageKind::Inequality {
                if let Some(dj) = &dj {
                    g_jac.push((e.offset, dj.clone(), e.inputs.clone()));
                }
            }
            if !adj {
                continue;
            }
            // adjoint rows: Λᵀ w and its derivatives
            let lam_t = if st.has_custom_adjoint() {
                st.adjoint(&x)?
            } else {
                dj.as_ref().expect("derivatives computed").transpose()
            };
            let wv = DVector::from_column_slice(w);
            let contrib = &lam_t * &wv;
            for (c, &row) in e.inputs.iter().enumerate() {
                f[r_adj + row] += contrib[c];
            }
            if let Some(j) = jac.as_mut() {
                for (c, &row) in e.inputs.iter().enumerate() {
                    for i in 0..st.dim_out {
                        j[(r_adj + row, mult_col0 + i)] += lam_t[(c, i)];
                    }
                }
                if w.iter().any(|&v| v != 0.0) {
                    let h = st.adjoint_hessian(&x, w)?;
                    for (a, &row) in e.inputs.iter().enumerate() {
                        for (b, &col) in e.inputs.iter().enumerate() {
                            j[(r_adj + row, col)] += h[(a, b)];
                        }
                    }
                }
            }
        }

        if adj {
            for i in 0..l {
                f[r_eta + i] = z.eta[i] - z.nu[i];
                if let Some(j) = jac.as_mut() {
                    j[(r_eta + i, c_eta + i)] = 1.0;
                }
            }
        }

        if ineq {
            for (off, dj, inputs) in &g_jac {
                for i in 0..dj.nrows() {
                    let k = off + i;
                    let gk = g_vals[k];
                    if self.active.contains(&k) {
                        f[r_ncp + k] = gk;
                        if let Some(j) = jac.as_mut() {
                            for (c, &col) in inputs.iter().enumerate() {
                                j[(r_ncp + k, col)] += dj[(i, c)];
                            }
                        }
                        continue;
                    }
                    let ncp = fb_chi_grad(z.sigma[k], -gk);
                    if ncp.singular {
                        meta.singular_ncp.push(k);
                    }
                    f[r_ncp + k] = ncp.value - z.kappa[k];
                    if let Some(j) = jac.as_mut() {
                        j[(r_ncp + k, c_sig + k)] = ncp.d_a;
                        for (c, &col) in inputs.iter().enumerate() {
                            j[(r_ncp + k, col)] -= ncp.d_b * dj[(i, c)];
                        }
                    }
                }
            }
        }

        if let Some(j) = jac.as_mut() {
            for (c, name) in active.iter().enumerate() {
                let col = self.core_len() + c;
                match self
                    .param_ref(name)
                    .ok_or_else(|| Error::UnknownParameter(name.clone()))?
                {
                    ParamRef::Mu(i) => j[(r_psi + i, col)] = -1.0,
                    ParamRef::Nu(i) => j[(r_eta + i, col)] = -1.0,
                    ParamRef::Xi(k) => j[(r_g + k, col)] = -1.0,
                    ParamRef::Kappa(k) => j[(r_ncp + k, col)] = -1.0,
                }
            }
        }
        Ok((f, jac, meta))
    }

    /// Variant in which the complementarity row of inequality `k` is
    /// replaced by `G_k(u) = 0`; `κ_k` leaves the parameter set.
    pub fn activate_constraint(&self, k: usize) -> Result<Self> {
        if k >= self.n_ineq() {
            return Err(Error::Dimension(format!("no inequality with index {k}")));
        }
        let mut p = self.clone();
        p.active.insert(k);
        Ok(p)
    }

    pub fn deactivate_constraint(&self, k: usize) -> Result<Self> {
        if k >= self.n_ineq() {
            return Err(Error::Dimension(format!("no inequality with index {k}")));
        }
        let mut p = self.clone();
        p.active.remove(&k);
        Ok(p)
    }

    /// Value of a named quantity: a parameter, a monitor or inequality
    /// multiplier (`eta_<label>`, `sigma_<label>`), or a named unknown.
    pub fn quantity(&self, z: &AugmentedPoint, name: &str) -> Option<f64> {
        if let Some(r) = self.param_ref(name) {
            return Some(z.param(r));
        }
        if let Some(s) = name.strip_prefix("eta_") {
            if let Some(i) = self.monitor_labels.iter().position(|l| l == s) {
                return Some(z.eta[i]);
            }
        }
        if let Some(s) = name.strip_prefix("sigma_") {
            if let Some(i) = self.ineq_labels.iter().position(|l| l == s) {
                return Some(z.sigma[i]);
            }
        }
        if let Some(s) = name.strip_prefix("kappa_") {
            if let Some(i) = self.ineq_labels.iter().position(|l| l == s) {
                return Some(z.kappa[i]);
            }
        }
        self.named_unknowns
            .iter()
            .find(|(n, _)| n == name)
            .map(|&(_, i)| z.u[i])
    }

    /// Whether [`StagedProblem::quantity`] knows `name`.
    pub fn has_quantity(&self, name: &str) -> bool {
        let in_labels = |prefix: &str, labels: &[String]| {
            name.strip_prefix(prefix)
                .is_some_and(|s| labels.iter().any(|l| l == s))
        };
        self.param_ref(name).is_some()
            || in_labels("eta_", &self.monitor_labels)
            || in_labels("sigma_", &self.ineq_labels)
            || in_labels("kappa_", &self.ineq_labels)
            || self.named_unknowns.iter().any(|(n, _)| n == name)
    }

    /// Position of a named quantity in the continuation vector for `ps`, if
    /// it is one of the unknowns there.
    pub fn quantity_index(&self, ps: &ParameterState, name: &str) -> Option<usize> {
        if let Some(pos) = ps.active().iter().position(|n| n == name) {
            return Some(self.core_len() + pos);
        }
        let c_eta = self.n_u + self.n_phi;
        if self.has_adjoint() {
            if let Some(s) = name.strip_prefix("eta_") {
                if let Some(i) = self.monitor_labels.iter().position(|l| l == s) {
                    return Some(c_eta + i);
                }
            }
        }
        if self.has_ineq() {
            if let Some(s) = name.strip_prefix("sigma_") {
                if let Some(i) = self.ineq_labels.iter().position(|l| l == s) {
                    return Some(c_eta + self.n_monitors() + i);
                }
            }
        }
        self.named_unknowns
            .iter()
            .find(|(n, _)| n == name)
            .map(|&(_, i)| i)
    }

    /// Largest deviation between each stage's adjoint block and the
    /// transpose of its Jacobian at `u`.
    pub fn adjoint_consistency(&self, u: &[f64]) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for e in &self.entries {
            let x = gather(u, &e.inputs);
            let dev = (e.stage.adjoint(&x)? - e.stage.jacobian(&x)?.transpose()).amax();
            worst = worst.max(dev);
        }
        Ok(worst)
    }

    /// `‖DΦᵀλ + DΨᵀη + DGᵀσ‖∞` at `z`.
    pub fn adjoint_residual(&self, z: &AugmentedPoint) -> Result<f64> {
        let mut r = DVector::zeros(self.n_u);
        for e in &self.entries {
            let st = &*e.stage;
            let x = gather(&z.u, &e.inputs);
            let w = match st.kind {
                StageKind::Zero => &z.lambda[e.offset..e.offset + st.dim_out],
                StageKind::Monitor => &z.eta[e.offset..e.offset + st.dim_out],
                StageKind::Inequality => &z.sigma[e.offset..e.offset + st.dim_out],
            };
            let c = st.adjoint(&x)? * DVector::from_column_slice(w);
            for (i, &row) in e.inputs.iter().enumerate() {
                r[row] += c[i];
            }
        }
        Ok(r.amax())
    }
}
