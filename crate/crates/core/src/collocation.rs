//! Fixed-mesh collocation of first-order boundary-value problems.
//!
//! On each of `N` intervals the state is a degree-`m` polynomial stored by
//! its values at `m + 1` equidistant base points. The differential equation
//! is imposed at the `m` Gauss–Legendre points of the interval, adjacent
//! intervals are joined by explicit continuity equations, and integrals are
//! evaluated with the same Gauss rule. Everything is exposed as stages for
//! [`StagedProblem`](crate::staged::StagedProblem).

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{newton_correct, FnSystem, NewtonSettings};
use crate::staged::{fd_jacobian, Stage, StageKind};

/// `(t, x, p) ↦ ẋ`.
pub type FieldFn = Arc<dyn Fn(f64, &[f64], &[f64]) -> DVector<f64> + Send + Sync>;
/// `(t, x, p) ↦ [∂f/∂x  ∂f/∂p]`, an `n_x × (n_x + n_p)` matrix.
pub type FieldJacFn = Arc<dyn Fn(f64, &[f64], &[f64]) -> DMatrix<f64> + Send + Sync>;
/// `(x(t0), x(tf), p) ↦ residual`.
pub type BcFn = Arc<dyn Fn(&[f64], &[f64], &[f64]) -> DVector<f64> + Send + Sync>;
/// `(x(t0), x(tf), p) ↦ ∂bc/∂(x(t0), x(tf), p)`.
pub type BcJacFn = Arc<dyn Fn(&[f64], &[f64], &[f64]) -> DMatrix<f64> + Send + Sync>;
/// `(t, x, p) ↦ value`.
pub type ScalarFn = Arc<dyn Fn(f64, &[f64], &[f64]) -> f64 + Send + Sync>;
/// `(t, x, p) ↦ [∂g/∂x, ∂g/∂p]`, of length `n_x + n_p`.
pub type GradFn = Arc<dyn Fn(f64, &[f64], &[f64]) -> DVector<f64> + Send + Sync>;

/// Gauss–Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    for i in 0..m {
        // root of P_m on [-1, 1], Newton from the Chebyshev-like guess
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre(m, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(m, x);
        if d.is_finite() {
            dp = d;
        }
        // ascending order on [0, 1]
        let k = m - 1 - i;
        nodes[k] = 0.5 * (x + 1.0);
        weights[k] = 1.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Values and derivatives of the Lagrange basis on `m + 1` equidistant
/// points of `[0, 1]`, evaluated at `tau`.
fn lagrange(m: usize, tau: f64) -> (Vec<f64>, Vec<f64>) {
    let base: Vec<f64> = (0..=m).map(|k| k as f64 / m as f64).collect();
    let mut val = vec![0.0; m + 1];
    let mut der = vec![0.0; m + 1];
    for k in 0..=m {
        let mut v = 1.0;
        for i in 0..=m {
            if i != k {
                v *= (tau - base[i]) / (base[k] - base[i]);
            }
        }
        val[k] = v;
        let mut d = 0.0;
        for i in 0..=m {
            if i == k {
                continue;
            }
            let mut term = 1.0 / (base[k] - base[i]);
            for l in 0..=m {
                if l != k && l != i {
                    term *= (tau - base[l]) / (base[k] - base[l]);
                }
            }
            d += term;
        }
        der[k] = d;
    }
    (val, der)
}

/// A uniform mesh of `n` intervals on `[t0, tf]` with `m` Gauss points per
/// interval.
#[derive(Debug, Clone)]
pub struct CollocationMesh {
    pub n: usize,
    pub m: usize,
    pub t0: f64,
    pub tf: f64,
    /// All collocation times, interval by interval.
    pub nodes: Vec<f64>,
    /// Quadrature weights matching `nodes`; they sum to `tf − t0`.
    pub weights: Vec<f64>,
    local_nodes: Vec<f64>,
    local_weights: Vec<f64>,
    /// `lmat[(j, k)] = ℓ_k(τ_j)`.
    lmat: DMatrix<f64>,
    /// `dmat[(j, k)] = ℓ_k'(τ_j)`.
    dmat: DMatrix<f64>,
}

impl CollocationMesh {
    pub fn new(n: usize, m: usize, t0: f64, tf: f64) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::Domain(format!(
                "mesh needs n ≥ 1 and m ≥ 1, got n = {n}, m = {m}"
            )));
        }
        if tf.partial_cmp(&t0) != Some(std::cmp::Ordering::Greater)
            || !t0.is_finite()
            || !tf.is_finite()
        {
            return Err(Error::Domain(format!(
                "mesh interval [{t0}, {tf}] is empty"
            )));
        }
        let (local_nodes, local_weights) = gauss_legendre(m);
        let h = (tf - t0) / n as f64;
        let mut nodes = Vec::with_capacity(n * m);
        let mut weights = Vec::with_capacity(n * m);
        for i in 0..n {
            let a = t0 + i as f64 * h;
            for j in 0..m {
                nodes.push(a + h * local_nodes[j]);
                weights.push(h * local_weights[j]);
            }
        }
        let mut lmat = DMatrix::zeros(m, m + 1);
        let mut dmat = DMatrix::zeros(m, m + 1);
        for (j, &tau) in local_nodes.iter().enumerate() {
            let (v, d) = lagrange(m, tau);
            for k in 0..=m {
                lmat[(j, k)] = v[k];
                dmat[(j, k)] = d[k];
            }
        }
        Ok(CollocationMesh {
            n,
            m,
            t0,
            tf,
            nodes,
            weights,
            local_nodes,
            local_weights,
            lmat,
            dmat,
        })
    }

    /// Interval length.
    pub fn h(&self) -> f64 {
        (self.tf - self.t0) / self.n as f64
    }

    /// Times of the base points, interval by interval (interior interval
    /// boundaries appear twice).
    pub fn base_times(&self) -> Vec<f64> {
        let h = self.h();
        let mut out = Vec::with_capacity(self.n * (self.m + 1));
        for i in 0..self.n {
            for k in 0..=self.m {
                out.push(self.t0 + h * (i as f64 + k as f64 / self.m as f64));
            }
        }
        out
    }

    /// Composite Gauss quadrature of `f`.
    pub fn quad<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&t, &w)| w * f(t))
            .sum()
    }

    pub fn local_nodes(&self) -> &[f64] {
        &self.local_nodes
    }

    pub fn local_weights(&self) -> &[f64] {
        &self.local_weights
    }
}

/// A scalar integrand `∫ g(t, x, p) dt` that becomes a monitor or an
/// inequality stage.
#[derive(Clone)]
pub struct Integrand {
    pub name: String,
    pub kind: StageKind,
    g: ScalarFn,
    grad: Option<GradFn>,
}

impl Integrand {
    pub fn monitor<F>(name: &str, g: F) -> Self
    where
        F: Fn(f64, &[f64], &[f64]) -> f64 + Send + Sync + 'static,
    {
        Integrand {
            name: name.to_string(),
            kind: StageKind::Monitor,
            g: Arc::new(g),
            grad: None,
        }
    }

    pub fn inequality<F>(name: &str, g: F) -> Self
    where
        F: Fn(f64, &[f64], &[f64]) -> f64 + Send + Sync + 'static,
    {
        Integrand {
            kind: StageKind::Inequality,
            ..Self::monitor(name, g)
        }
    }

    pub fn with_gradient<F>(mut self, grad: F) -> Self
    where
        F: Fn(f64, &[f64], &[f64]) -> DVector<f64> + Send + Sync + 'static,
    {
        self.grad = Some(Arc::new(grad));
        self
    }

    pub fn value(&self, t: f64, x: &[f64], p: &[f64]) -> f64 {
        (self.g)(t, x, p)
    }

    fn gradient(&self, t: f64, x: &[f64], p: &[f64]) -> DVector<f64> {
        match &self.grad {
            Some(g) => g(t, x, p),
            None => {
                let nx = x.len();
                let z: Vec<f64> = x.iter().chain(p).copied().collect();
                let j = fd_jacobian(
                    |y| DVector::from_element(1, (self.g)(t, &y[..nx], &y[nx..])),
                    &z,
                    1,
                );
                j.row(0).transpose()
            }
        }
    }
}

/// A first-order boundary-value problem `ẋ = f(t, x, p)`, `bc(x(t0), x(tf), p) = 0`.
#[derive(Clone)]
pub struct BvpSpec {
    pub n_x: usize,
    pub n_p: usize,
    pub n_bc: usize,
    f: FieldFn,
    dfdz: Option<FieldJacFn>,
    bc: BcFn,
    bc_jac: Option<BcJacFn>,
    pub integrands: Vec<Integrand>,
}

impl BvpSpec {
    pub fn new<F, B>(n_x: usize, n_p: usize, f: F, n_bc: usize, bc: B) -> Self
    where
        F: Fn(f64, &[f64], &[f64]) -> DVector<f64> + Send + Sync + 'static,
        B: Fn(&[f64], &[f64], &[f64]) -> DVector<f64> + Send + Sync + 'static,
    {
        BvpSpec {
            n_x,
            n_p,
            n_bc,
            f: Arc::new(f),
            dfdz: None,
            bc: Arc::new(bc),
            bc_jac: None,
            integrands: Vec::new(),
        }
    }

    pub fn with_field_jacobian<F>(mut self, j: F) -> Self
    where
        F: Fn(f64, &[f64], &[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.dfdz = Some(Arc::new(j));
        self
    }

    pub fn with_bc_jacobian<F>(mut self, j: F) -> Self
    where
        F: Fn(&[f64], &[f64], &[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.bc_jac = Some(Arc::new(j));
        self
    }

    pub fn with_integrand(mut self, g: Integrand) -> Self {
        self.integrands.push(g);
        self
    }

    pub fn field(&self, t: f64, x: &[f64], p: &[f64]) -> DVector<f64> {
        (self.f)(t, x, p)
    }

    /// `[∂f/∂x  ∂f/∂p]` at one point.
    pub fn field_jacobian(&self, t: f64, x: &[f64], p: &[f64]) -> DMatrix<f64> {
        match &self.dfdz {
            Some(j) => j(t, x, p),
            None => {
                let nx = self.n_x;
                let z: Vec<f64> = x.iter().chain(p).copied().collect();
                fd_jacobian(|y| (self.f)(t, &y[..nx], &y[nx..]), &z, nx)
            }
        }
    }

    pub fn bc(&self, x0: &[f64], x1: &[f64], p: &[f64]) -> DVector<f64> {
        (self.bc)(x0, x1, p)
    }

    /// `∂bc/∂(x(t0), x(tf), p)`, an `n_bc × (2 n_x + n_p)` matrix.
    pub fn bc_jacobian(&self, x0: &[f64], x1: &[f64], p: &[f64]) -> DMatrix<f64> {
        match &self.bc_jac {
            Some(j) => j(x0, x1, p),
            None => {
                let nx = self.n_x;
                let z: Vec<f64> = x0.iter().chain(x1).chain(p).copied().collect();
                fd_jacobian(
                    |y| (self.bc)(&y[..nx], &y[nx..2 * nx], &y[2 * nx..]),
                    &z,
                    self.n_bc,
                )
            }
        }
    }
}

/// A BVP on a mesh: unknown layout, residuals and stages.
///
/// The unknowns of the discretization are the base-point states
/// `X[i, k, c]` (interval `i`, base point `k`, component `c`) followed by
/// the `n_p` problem parameters.
#[derive(Clone)]
pub struct Discretization {
    pub spec: Arc<BvpSpec>,
    pub mesh: Arc<CollocationMesh>,
}

/// Hessian of a scalar function of `z` from its gradient by central
/// differences.
fn fd_hessian<G: Fn(&[f64]) -> DVector<f64>>(grad: G, z: &[f64], exact_grad: bool) -> DMatrix<f64> {
    let n = z.len();
    let base = if exact_grad {
        f64::EPSILON.cbrt()
    } else {
        f64::EPSILON.powf(0.25)
    };
    let mut h = DMatrix::zeros(n, n);
    let mut y = z.to_vec();
    for j in 0..n {
        let step = base * (1.0 + z[j].abs());
        y[j] = z[j] + step;
        let gp = grad(&y);
        y[j] = z[j] - step;
        let gm = grad(&y);
        y[j] = z[j];
        h.set_column(j, &((gp - gm) / (2.0 * step)));
    }
    // symmetrize to remove truncation asymmetry
    (&h + h.transpose()) * 0.5
}

/// Hessian of a scalar function by second differences with step `ε^¼`.
fn fd_hessian_scalar<F: Fn(&[f64]) -> f64>(f: F, z: &[f64]) -> DMatrix<f64> {
    let n = z.len();
    let base = f64::EPSILON.powf(0.25);
    let steps: Vec<f64> = z.iter().map(|v| base * (1.0 + v.abs())).collect();
    let mut h = DMatrix::zeros(n, n);
    let mut y = z.to_vec();
    let f0 = f(z);
    for a in 0..n {
        y[a] = z[a] + steps[a];
        let fp = f(&y);
        y[a] = z[a] - steps[a];
        let fm = f(&y);
        y[a] = z[a];
        h[(a, a)] = (fp - 2.0 * f0 + fm) / (steps[a] * steps[a]);
        for b in 0..a {
            let mut corner = |sa: f64, sb: f64| {
                y[a] = z[a] + sa * steps[a];
                y[b] = z[b] + sb * steps[b];
                let v = f(&y);
                y[a] = z[a];
                y[b] = z[b];
                v
            };
            let v = (corner(1.0, 1.0) - corner(1.0, -1.0) - corner(-1.0, 1.0) + corner(-1.0, -1.0))
                / (4.0 * steps[a] * steps[b]);
            h[(a, b)] = v;
            h[(b, a)] = v;
        }
    }
    h
}

impl Discretization {
    pub fn new(spec: BvpSpec, mesh: CollocationMesh) -> Result<Self> {
        if spec.n_x == 0 {
            return Err(Error::Dimension("BVP with no states".into()));
        }
        Ok(Discretization {
            spec: Arc::new(spec),
            mesh: Arc::new(mesh),
        })
    }

    /// Number of base-point state values.
    pub fn n_states(&self) -> usize {
        self.mesh.n * (self.mesh.m + 1) * self.spec.n_x
    }

    /// States plus parameters.
    pub fn n_unknowns(&self) -> usize {
        self.n_states() + self.spec.n_p
    }

    /// Rows of the discretized zero problem.
    pub fn n_rows(&self) -> usize {
        let (n, m, nx) = (self.mesh.n, self.mesh.m, self.spec.n_x);
        n * m * nx + (n - 1) * nx + self.spec.n_bc
    }

    /// Index of parameter `k` among the unknowns.
    pub fn p_index(&self, k: usize) -> usize {
        self.n_states() + k
    }

    /// Index of state component `c` at base point `k` of interval `i`.
    pub fn x_index(&self, i: usize, k: usize, c: usize) -> usize {
        (i * (self.mesh.m + 1) + k) * self.spec.n_x + c
    }

    /// Collocation-point states of interval `i`, node `j`.
    fn node_state(&self, u: &[f64], i: usize, j: usize) -> Vec<f64> {
        let (m, nx) = (self.mesh.m, self.spec.n_x);
        let mut xc = vec![0.0; nx];
        for k in 0..=m {
            let l = self.mesh.lmat[(j, k)];
            let b = self.x_index(i, k, 0);
            for c in 0..nx {
                xc[c] += l * u[b + c];
            }
        }
        xc
    }

    /// Discretized residual `Φ(u)`.
    pub fn residual(&self, u: &[f64]) -> DVector<f64> {
        let (n, m, nx) = (self.mesh.n, self.mesh.m, self.spec.n_x);
        let h = self.mesh.h();
        let p = &u[self.n_states()..];
        let mut r = DVector::zeros(self.n_rows());
        let mut row = 0;
        for i in 0..n {
            for j in 0..m {
                let t = self.mesh.nodes[i * m + j];
                let xc = self.node_state(u, i, j);
                let f = self.spec.field(t, &xc, p);
                for c in 0..nx {
                    let mut d = 0.0;
                    for k in 0..=m {
                        d += self.mesh.dmat[(j, k)] * u[self.x_index(i, k, c)];
                    }
                    r[row + c] = d - h * f[c];
                }
                row += nx;
            }
        }
        for i in 0..n - 1 {
            for c in 0..nx {
                r[row + c] = u[self.x_index(i, m, c)] - u[self.x_index(i + 1, 0, c)];
            }
            row += nx;
        }
        let x0 = &u[self.x_index(0, 0, 0)..self.x_index(0, 0, 0) + nx];
        let x1 = &u[self.x_index(n - 1, m, 0)..self.x_index(n - 1, m, 0) + nx];
        let bc = self.spec.bc(x0, x1, p);
        r.rows_mut(row, self.spec.n_bc).copy_from(&bc);
        r
    }

    /// Jacobian of [`Discretization::residual`] with respect to all unknowns.
    pub fn jacobian(&self, u: &[f64]) -> DMatrix<f64> {
        let (n, m, nx, np) = (self.mesh.n, self.mesh.m, self.spec.n_x, self.spec.n_p);
        let h = self.mesh.h();
        let ns = self.n_states();
        let p = &u[ns..];
        let mut jac = DMatrix::zeros(self.n_rows(), self.n_unknowns());
        let mut row = 0;
        for i in 0..n {
            for j in 0..m {
                let t = self.mesh.nodes[i * m + j];
                let xc = self.node_state(u, i, j);
                let fz = self.spec.field_jacobian(t, &xc, p);
                for k in 0..=m {
                    let (l, d) = (self.mesh.lmat[(j, k)], self.mesh.dmat[(j, k)]);
                    let b = self.x_index(i, k, 0);
                    for c in 0..nx {
                        jac[(row + c, b + c)] += d;
                        for c2 in 0..nx {
                            jac[(row + c, b + c2)] -= h * l * fz[(c, c2)];
                        }
                    }
                }
                for c in 0..nx {
                    for q in 0..np {
                        jac[(row + c, ns + q)] = -h * fz[(c, nx + q)];
                    }
                }
                row += nx;
            }
        }
        for i in 0..n - 1 {
            for c in 0..nx {
                jac[(row + c, self.x_index(i, m, c))] = 1.0;
                jac[(row + c, self.x_index(i + 1, 0, c))] = -1.0;
            }
            row += nx;
        }
        let (i0, i1) = (self.x_index(0, 0, 0), self.x_index(n - 1, m, 0));
        let bj = self.spec.bc_jacobian(&u[i0..i0 + nx], &u[i1..i1 + nx], p);
        for r in 0..self.spec.n_bc {
            for c in 0..nx {
                jac[(row + r, i0 + c)] += bj[(r, c)];
                jac[(row + r, i1 + c)] += bj[(r, nx + c)];
            }
            for q in 0..np {
                jac[(row + r, ns + q)] += bj[(r, 2 * nx + q)];
            }
        }
        jac
    }

    /// `D(Jᵀ(u)·w)`: second derivatives of `wᵀ Φ(u)`.
    pub fn adjoint_hessian(&self, u: &[f64], w: &[f64]) -> DMatrix<f64> {
        let (n, m, nx, np) = (self.mesh.n, self.mesh.m, self.spec.n_x, self.spec.n_p);
        let h = self.mesh.h();
        let ns = self.n_states();
        let p = &u[ns..];
        let nz = nx + np;
        let mut out = DMatrix::zeros(self.n_unknowns(), self.n_unknowns());
        let exact = self.spec.dfdz.is_some();
        let mut row = 0;
        for i in 0..n {
            for j in 0..m {
                let wn = DVector::from_column_slice(&w[row..row + nx]);
                row += nx;
                if wn.iter().all(|&v| v == 0.0) {
                    continue;
                }
                let t = self.mesh.nodes[i * m + j];
                let xc = self.node_state(u, i, j);
                let z: Vec<f64> = xc.iter().chain(p).copied().collect();
                let hn = fd_hessian(
                    |y| self.spec.field_jacobian(t, &y[..nx], &y[nx..]).transpose() * &wn,
                    &z,
                    exact,
                ) * (-h);
                // map node variables (xc, p) to unknowns (X[i, ·], p)
                let idx = |a: usize, k: usize| -> usize {
                    if a < nx {
                        self.x_index(i, k, a)
                    } else {
                        ns + a - nx
                    }
                };
                for a in 0..nz {
                    for b in 0..nz {
                        let v = hn[(a, b)];
                        if v == 0.0 {
                            continue;
                        }
                        match (a < nx, b < nx) {
                            (true, true) => {
                                for k in 0..=m {
                                    let lk = self.mesh.lmat[(j, k)];
                                    for k2 in 0..=m {
                                        out[(idx(a, k), idx(b, k2))] +=
                                            lk * self.mesh.lmat[(j, k2)] * v;
                                    }
                                }
                            }
                            (true, false) => {
                                for k in 0..=m {
                                    out[(idx(a, k), idx(b, 0))] += self.mesh.lmat[(j, k)] * v;
                                }
                            }
                            (false, true) => {
                                for k2 in 0..=m {
                                    out[(idx(a, 0), idx(b, k2))] += self.mesh.lmat[(j, k2)] * v;
                                }
                            }
                            (false, false) => out[(idx(a, 0), idx(b, 0))] += v,
                        }
                    }
                }
            }
        }
        row += (n - 1) * nx;
        let wb = DVector::from_column_slice(&w[row..row + self.spec.n_bc]);
        if wb.iter().any(|&v| v != 0.0) {
            let (i0, i1) = (self.x_index(0, 0, 0), self.x_index(n - 1, m, 0));
            let bcz: Vec<f64> = u[i0..i0 + nx]
                .iter()
                .chain(&u[i1..i1 + nx])
                .chain(p)
                .copied()
                .collect();
            let hb = fd_hessian_scalar(
                |v| {
                    self.spec
                        .bc(&v[..nx], &v[nx..2 * nx], &v[2 * nx..])
                        .dot(&wb)
                },
                &bcz,
            );
            let map = |a: usize| -> usize {
                if a < nx {
                    i0 + a
                } else if a < 2 * nx {
                    i1 + a - nx
                } else {
                    ns + a - 2 * nx
                }
            };
            for a in 0..bcz.len() {
                for b in 0..bcz.len() {
                    out[(map(a), map(b))] += hb[(a, b)];
                }
            }
        }
        out
    }

    /// Composite quadrature of an integrand on the discrete solution.
    pub fn integral(&self, g: &Integrand, u: &[f64]) -> f64 {
        let (n, m) = (self.mesh.n, self.mesh.m);
        let p = &u[self.n_states()..];
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..m {
                let xc = self.node_state(u, i, j);
                s += self.mesh.weights[i * m + j] * g.value(self.mesh.nodes[i * m + j], &xc, p);
            }
        }
        s
    }

    /// Gradient of [`Discretization::integral`] with respect to all unknowns.
    pub fn integral_gradient(&self, g: &Integrand, u: &[f64]) -> DVector<f64> {
        let (n, m, nx) = (self.mesh.n, self.mesh.m, self.spec.n_x);
        let ns = self.n_states();
        let p = &u[ns..];
        let mut out = DVector::zeros(self.n_unknowns());
        for i in 0..n {
            for j in 0..m {
                let xc = self.node_state(u, i, j);
                let w = self.mesh.weights[i * m + j];
                let gr = g.gradient(self.mesh.nodes[i * m + j], &xc, p);
                for k in 0..=m {
                    let l = self.mesh.lmat[(j, k)] * w;
                    let b = self.x_index(i, k, 0);
                    for c in 0..nx {
                        out[b + c] += l * gr[c];
                    }
                }
                for q in 0..self.spec.n_p {
                    out[ns + q] += w * gr[nx + q];
                }
            }
        }
        out
    }

    /// Hessian of [`Discretization::integral`] scaled by `w`.
    pub fn integral_hessian(&self, g: &Integrand, u: &[f64], w: f64) -> DMatrix<f64> {
        let (n, m, nx, np) = (self.mesh.n, self.mesh.m, self.spec.n_x, self.spec.n_p);
        let ns = self.n_states();
        let p = &u[ns..];
        let nz = nx + np;
        let mut out = DMatrix::zeros(self.n_unknowns(), self.n_unknowns());
        if w == 0.0 {
            return out;
        }
        for i in 0..n {
            for j in 0..m {
                let t = self.mesh.nodes[i * m + j];
                let xc = self.node_state(u, i, j);
                let z: Vec<f64> = xc.iter().chain(p).copied().collect();
                let hn = fd_hessian(|y| g.gradient(t, &y[..nx], &y[nx..]), &z, g.grad.is_some())
                    * (w * self.mesh.weights[i * m + j]);
                // expand through the interpolation weights
                let mut coef = vec![(0usize, 0.0f64); 0];
                for a in 0..nz {
                    coef.clear();
                    if a < nx {
                        for k in 0..=m {
                            coef.push((self.x_index(i, k, a), self.mesh.lmat[(j, k)]));
                        }
                    } else {
                        coef.push((ns + a - nx, 1.0));
                    }
                    for b in 0..nz {
                        let v = hn[(a, b)];
                        if v == 0.0 {
                            continue;
                        }
                        if b < nx {
                            for k2 in 0..=m {
                                let cb = self.x_index(i, k2, b);
                                let lb = self.mesh.lmat[(j, k2)];
                                for &(ca, la) in &coef {
                                    out[(ca, cb)] += la * lb * v;
                                }
                            }
                        } else {
                            for &(ca, la) in &coef {
                                out[(ca, ns + b - nx)] += la * v;
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// The zero stage holding collocation, continuity and boundary
    /// conditions. It introduces all unknowns of the discretization.
    pub fn zero_stage(&self, name: &str) -> Stage {
        let (a, b, c) = (self.clone(), self.clone(), self.clone());
        Stage::zero(name, self.n_rows(), vec![], self.n_unknowns(), move |u| {
            a.residual(u)
        })
        .with_jacobian(move |u| b.jacobian(u))
        .with_adjoint_hessian(move |u, w| c.adjoint_hessian(u, w))
    }

    /// A monitor or inequality stage for integrand `idx` of the [`BvpSpec`]. The
    /// zero stage must own unknowns `0..n_unknowns()`.
    pub fn integral_stage(&self, idx: usize) -> Result<Stage> {
        let g = self
            .spec
            .integrands
            .get(idx)
            .cloned()
            .ok_or_else(|| Error::Dimension(format!("no integrand with index {idx}")))?;
        let deps: Vec<usize> = (0..self.n_unknowns()).collect();
        let (d1, d2, d3) = (self.clone(), self.clone(), self.clone());
        let (g1, g2, g3) = (g.clone(), g.clone(), g.clone());
        let eval = move |u: &[f64]| DVector::from_element(1, d1.integral(&g1, u));
        let stage = match g.kind {
            StageKind::Inequality => Stage::inequality(&g.name, 1, deps, eval),
            _ => Stage::monitor(&g.name, 1, deps, eval),
        };
        Ok(stage
            .with_jacobian(move |u| {
                DMatrix::from_row_slice(1, d2.n_unknowns(), d2.integral_gradient(&g2, u).as_slice())
            })
            .with_adjoint_hessian(move |u, w| d3.integral_hessian(&g3, u, w[0])))
    }

    /// All stages: the zero stage followed by one stage per integrand.
    pub fn stages(&self, name: &str) -> Result<Vec<Stage>> {
        let mut out = vec![self.zero_stage(name)];
        for k in 0..self.spec.integrands.len() {
            out.push(self.integral_stage(k)?);
        }
        Ok(out)
    }

    /// Monitor stage `u ↦ p_k`.
    pub fn parameter_monitor(&self, name: &str, k: usize) -> Stage {
        let idx = self.p_index(k);
        Stage::monitor(name, 1, vec![idx], |x| DVector::from_element(1, x[0]))
            .with_jacobian(|_| DMatrix::from_element(1, 1, 1.0))
            .with_adjoint_hessian(|_, _| DMatrix::zeros(1, 1))
    }

    /// Unknown vector sampled from a function of time.
    pub fn sample<F: Fn(f64) -> Vec<f64>>(&self, x: F, p: &[f64]) -> Vec<f64> {
        let mut u = Vec::with_capacity(self.n_unknowns());
        for t in self.mesh.base_times() {
            u.extend(x(t));
        }
        u.extend_from_slice(p);
        u
    }

    /// State at time `t` from the piecewise polynomial.
    pub fn state_at(&self, u: &[f64], t: f64) -> Vec<f64> {
        let (n, m, nx) = (self.mesh.n, self.mesh.m, self.spec.n_x);
        let s = ((t - self.mesh.t0) / self.mesh.h()).clamp(0.0, n as f64);
        let i = (s.floor() as usize).min(n - 1);
        let (l, _) = lagrange(m, s - i as f64);
        let mut x = vec![0.0; nx];
        for k in 0..=m {
            for c in 0..nx {
                x[c] += l[k] * u[self.x_index(i, k, c)];
            }
        }
        x
    }

    /// Solves `Φ = 0` for the states with the parameters held fixed.
    /// Needs as many boundary conditions as states.
    pub fn solve_states(&self, guess: &[f64], p: &[f64]) -> Result<Vec<f64>> {
        if self.spec.n_bc != self.spec.n_x {
            return Err(Error::Dimension(format!(
                "state solve needs {} boundary conditions, the problem has {}",
                self.spec.n_x, self.spec.n_bc
            )));
        }
        let ns = self.n_states();
        if guess.len() != ns || p.len() != self.spec.n_p {
            return Err(Error::Dimension(
                "state solve: guess or parameter length".into(),
            ));
        }
        let full = |z: &DVector<f64>| -> Vec<f64> { z.iter().chain(p).copied().collect() };
        let sys = FnSystem {
            residual: |z: &DVector<f64>| Ok(self.residual(&full(z))),
            jacobian: |z: &DVector<f64>| Ok(self.jacobian(&full(z)).columns(0, ns).into_owned()),
        };
        let settings = NewtonSettings {
            max_iter: 30,
            ..NewtonSettings::default()
        };
        let out = newton_correct(&sys, &DVector::from_column_slice(guess), None, settings)?;
        if !out.converged {
            return Err(Error::NoConvergence(format!(
                "state solve stopped at ‖Φ‖ = {:.3e}",
                out.residual_norm()
            )));
        }
        Ok(full(&out.z))
    }
}

/// A sampled solution of an initial-value problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub x: Vec<Vec<f64>>,
}

impl Trajectory {
    /// Linear interpolation between samples, constant outside.
    pub fn at(&self, t: f64) -> Vec<f64> {
        let n = self.t.len();
        if n == 1 || t <= self.t[0] {
            return self.x[0].clone();
        }
        if t >= self.t[n - 1] {
            return self.x[n - 1].clone();
        }
        let k = self.t.partition_point(|&s| s <= t).clamp(1, n - 1);
        let (ta, tb) = (self.t[k - 1], self.t[k]);
        let a = (t - ta) / (tb - ta);
        self.x[k - 1]
            .iter()
            .zip(&self.x[k])
            .map(|(&xa, &xb)| xa + a * (xb - xa))
            .collect()
    }

    /// The trajectory at the base points of `disc`, followed by `p`.
    pub fn resample(&self, disc: &Discretization, p: &[f64]) -> Vec<f64> {
        disc.sample(|t| self.at(t), p)
    }
}

/// Classical fourth-order Runge–Kutta with `steps` equal steps.
pub fn integrate_ivp<F>(
    f: F,
    x0: &[f64],
    p: &[f64],
    t0: f64,
    tf: f64,
    steps: usize,
) -> Result<Trajectory>
where
    F: Fn(f64, &[f64], &[f64]) -> DVector<f64>,
{
    if steps == 0 {
        return Err(Error::Domain(
            "integrate_ivp needs at least one step".into(),
        ));
    }
    let h = (tf - t0) / steps as f64;
    let mut t = Vec::with_capacity(steps + 1);
    let mut xs = Vec::with_capacity(steps + 1);
    let mut x = DVector::from_column_slice(x0);
    t.push(t0);
    xs.push(x0.to_vec());
    for s in 0..steps {
        let ts = t0 + s as f64 * h;
        let k1 = f(ts, x.as_slice(), p);
        let k2 = f(ts + 0.5 * h, (&x + &k1 * (0.5 * h)).as_slice(), p);
        let k3 = f(ts + 0.5 * h, (&x + &k2 * (0.5 * h)).as_slice(), p);
        let k4 = f(ts + h, (&x + &k3 * h).as_slice(), p);
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::Domain(format!("non-finite state at t = {}", ts + h)));
        }
        t.push(if s + 1 == steps { tf } else { ts + h });
        xs.push(x.as_slice().to_vec());
    }
    Ok(Trajectory { t, x: xs })
}

/// `T_0(s), …, T_{n−1}(s)`.
pub fn chebyshev_basis(n: usize, s: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        out.push(match k {
            0 => 1.0,
            1 => s,
            _ => 2.0 * s * out[k - 1] - out[k - 2],
        });
    }
    out
}

/// Maps `t ∈ [t0, tf]` to `s ∈ [−1, 1]`.
pub fn chebyshev_arg(t: f64, t0: f64, tf: f64) -> f64 {
    2.0 * (t - t0) / (tf - t0) - 1.0
}

/// `u(t) = Σ_k p_k T_k(s)`, `s = 2(t − t0)/(tf − t0) − 1`.
pub fn chebyshev_control(p: &[f64], t: f64, t0: f64, tf: f64) -> Result<f64> {
    let slack = 1e-12 * (tf - t0).abs();
    if !(t >= t0 - slack && t <= tf + slack) {
        return Err(Error::Domain(format!("t = {t} outside [{t0}, {tf}]")));
    }
    let s = chebyshev_arg(t, t0, tf).clamp(-1.0, 1.0);
    Ok(chebyshev_basis(p.len(), s)
        .iter()
        .zip(p)
        .map(|(b, c)| b * c)
        .sum())
}

#[cfg(test)]
mod tests;
