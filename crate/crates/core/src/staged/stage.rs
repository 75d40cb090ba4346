use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// `x ↦ value`, where `x` holds the stage inputs (dependencies followed by
/// the unknowns the stage introduces).
pub type EvalFn = Arc<dyn Fn(&[f64]) -> DVector<f64> + Send + Sync>;
/// `x ↦ matrix`; used for Jacobians (`dim_out × inputs`) and adjoint blocks
/// (`inputs × dim_out`).
pub type MatFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;
/// `(x, w) ↦ D(Λᵀ(x)·w)`, an `inputs × inputs` matrix.
pub type HessFn = Arc<dyn Fn(&[f64], &[f64]) -> DMatrix<f64> + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageKind {
    Zero,
    Monitor,
    Inequality,
}

/// One building block of a staged problem: a zero, monitor or inequality
/// function of previously declared unknowns and (optionally) new ones.
#[derive(Clone)]
pub struct Stage {
    pub name: String,
    pub kind: StageKind,
    pub dim_out: usize,
    pub deps: Vec<usize>,
    pub new_unknowns: usize,
    pub labels: Vec<String>,
    eval: EvalFn,
    jac: Option<MatFn>,
    adjoint: Option<MatFn>,
    adjoint_hessian: Option<HessFn>,
}

impl fmt::Debug for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Stage")
            .field("name", &self.name)
            .field("kind", &self.kind)
            .field("dim_out", &self.dim_out)
            .field("deps", &self.deps.len())
            .field("new_unknowns", &self.new_unknowns)
            .field("jac", &self.jac.is_some())
            .field("adjoint", &self.adjoint.is_some())
            .finish()
    }
}

impl Stage {
    fn new<F>(
        name: &str,
        kind: StageKind,
        dim_out: usize,
        deps: Vec<usize>,
        new_unknowns: usize,
        eval: F,
    ) -> Self
    where
        F: Fn(&[f64]) -> DVector<f64> + Send + Sync + 'static,
    {
        let labels = if dim_out == 1 {
            vec![name.to_string()]
        } else {
            (1..=dim_out).map(|i| format!("{name}{i}")).collect()
        };
        Stage {
            name: name.to_string(),
            kind,
            dim_out,
            deps,
            new_unknowns,
            labels,
            eval: Arc::new(eval),
            jac: None,
            adjoint: None,
            adjoint_hessian: None,
        }
    }

    pub fn zero<F>(
        name: &str,
        dim_out: usize,
        deps: Vec<usize>,
        new_unknowns: usize,
        eval: F,
    ) -> Self
    where
        F: Fn(&[f64]) -> DVector<f64> + Send + Sync + 'static,
    {
        Self::new(name, StageKind::Zero, dim_out, deps, new_unknowns, eval)
    }

    pub fn monitor<F>(name: &str, dim_out: usize, deps: Vec<usize>, eval: F) -> Self
    where
        F: Fn(&[f64]) -> DVector<f64> + Send + Sync + 'static,
    {
        Self::new(name, StageKind::Monitor, dim_out, deps, 0, eval)
    }

    pub fn inequality<F>(name: &str, dim_out: usize, deps: Vec<usize>, eval: F) -> Self
    where
        F: Fn(&[f64]) -> DVector<f64> + Send + Sync + 'static,
    {
        Self::new(name, StageKind::Inequality, dim_out, deps, 0, eval)
    }

    pub fn with_jacobian<F>(mut self, f: F) -> Self
    where
        F: Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.jac = Some(Arc::new(f));
        self
    }

    pub fn with_adjoint<F>(mut self, f: F) -> Self
    where
        F: Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.adjoint = Some(Arc::new(f));
        self
    }

    pub fn with_adjoint_hessian<F>(mut self, f: F) -> Self
    where
        F: Fn(&[f64], &[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.adjoint_hessian = Some(Arc::new(f));
        self
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Self {
        self.labels = labels;
        self
    }

    pub fn with_new_unknowns(mut self, n: usize) -> Self {
        self.new_unknowns = n;
        self
    }

    pub fn n_inputs(&self) -> usize {
        self.deps.len() + self.new_unknowns
    }

    pub fn has_jacobian(&self) -> bool {
        self.jac.is_some()
    }

    pub fn eval(&self, x: &[f64]) -> Result<DVector<f64>> {
        let v = (self.eval)(x);
        if v.len() != self.dim_out {
            return Err(Error::stage(
                &self.name,
                format!("returned {} values, expected {}", v.len(), self.dim_out),
            ));
        }
        if !v.iter().all(|x| x.is_finite()) {
            return Err(Error::stage(&self.name, "non-finite value"));
        }
        Ok(v)
    }

    pub fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let j = match &self.jac {
            Some(f) => f(x),
            None => fd_jacobian(|y| (self.eval)(y), x, self.dim_out),
        };
        if j.shape() != (self.dim_out, self.n_inputs()) {
            return Err(Error::stage(
                &self.name,
                format!("Jacobian has shape {:?}", j.shape()),
            ));
        }
        if !j.iter().all(|x| x.is_finite()) {
            return Err(Error::stage(&self.name, "non-finite Jacobian"));
        }
        Ok(j)
    }

    /// The transposed derivative block `Λᵀ` (`inputs × dim_out`). Falls back
    /// to the transpose of [`Stage::jacobian`].
    pub fn adjoint(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        match &self.adjoint {
            Some(f) => {
                let a = f(x);
                if a.shape() != (self.n_inputs(), self.dim_out) {
                    return Err(Error::stage(
                        &self.name,
                        format!("adjoint has shape {:?}", a.shape()),
                    ));
                }
                Ok(a)
            }
            None => Ok(self.jacobian(x)?.transpose()),
        }
    }

    pub fn has_custom_adjoint(&self) -> bool {
        self.adjoint.is_some()
    }

    /// `D(Λᵀ(x)·w)` with respect to the stage inputs.
    pub fn adjoint_hessian(&self, x: &[f64], w: &[f64]) -> Result<DMatrix<f64>> {
        let n = self.n_inputs();
        let h = match &self.adjoint_hessian {
            Some(f) => f(x, w),
            None => {
                let wv = DVector::from_column_slice(w);
                let step_base = if self.adjoint.is_some() || self.jac.is_some() {
                    f64::EPSILON.cbrt()
                } else {
                    f64::EPSILON.powf(0.25)
                };
                let mut h = DMatrix::zeros(n, n);
                let mut y = x.to_vec();
                for j in 0..n {
                    let step = step_base * (1.0 + x[j].abs());
                    y[j] = x[j] + step;
                    let fp = self.adjoint(&y)? * &wv;
                    y[j] = x[j] - step;
                    let fm = self.adjoint(&y)? * &wv;
                    y[j] = x[j];
                    h.set_column(j, &((fp - fm) / (2.0 * step)));
                }
                h
            }
        };
        if h.shape() != (n, n) {
            return Err(Error::stage(
                &self.name,
                format!("adjoint Hessian has shape {:?}", h.shape()),
            ));
        }
        Ok(h)
    }
}

/// Central-difference Jacobian with step `√ε (1 + |xⱼ|)`.
pub fn fd_jacobian<F>(f: F, x: &[f64], dim_out: usize) -> DMatrix<f64>
where
    F: Fn(&[f64]) -> DVector<f64>,
{
    let n = x.len();
    let mut j = DMatrix::zeros(dim_out, n);
    let mut y = x.to_vec();
    let base = f64::EPSILON.sqrt();
    for k in 0..n {
        let step = base * (1.0 + x[k].abs());
        y[k] = x[k] + step;
        let fp = f(&y);
        y[k] = x[k] - step;
        let fm = f(&y);
        y[k] = x[k];
        j.set_column(k, &((fp - fm) / (2.0 * step)));
    }
    j
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic() -> Stage {
        // ψ(x, y) = (x − 2)² + 2(y − 1)²
        Stage::monitor("psi", 1, vec![0, 1], |x| {
            DVector::from_element(1, (x[0] - 2.0).powi(2) + 2.0 * (x[1] - 1.0).powi(2))
        })
    }

    #[test]
    fn fd_jacobian_matches_gradient() {
        let s = quadratic();
        let j = s.jacobian(&[3.0, 0.5]).unwrap();
        assert!((j[(0, 0)] - 2.0).abs() < 1e-7);
        assert!((j[(0, 1)] + 2.0).abs() < 1e-7);
    }

    #[test]
    fn fd_adjoint_hessian() {
        let s = quadratic().with_jacobian(|x| {
            DMatrix::from_row_slice(1, 2, &[2.0 * (x[0] - 2.0), 4.0 * (x[1] - 1.0)])
        });
        let h = s.adjoint_hessian(&[0.3, -1.0], &[0.5]).unwrap();
        let expect = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]);
        assert!((h - expect).amax() < 1e-8);
    }

    #[test]
    fn wrong_output_length_is_reported_with_stage_name() {
        let s = Stage::zero("bad", 2, vec![], 1, |x| DVector::from_element(1, x[0]));
        match s.eval(&[1.0]) {
            Err(Error::Stage { stage, .. }) => assert_eq!(stage, "bad"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn default_labels() {
        assert_eq!(quadratic().labels, vec!["psi"]);
        let g = Stage::inequality("g", 2, vec![0], |x| DVector::from_vec(vec![x[0], -x[0]]));
        assert_eq!(g.labels, vec!["g1", "g2"]);
    }
}
