//! Dense LU factorization, bordered nullspace computation and the Newton
//! corrector used by the continuation code.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Residual tolerance (∞-norm) for a converged Newton correction.
pub const NEWTON_TOL: f64 = 1e-10;
/// Maximum number of Newton updates per correction.
pub const MAX_NEWTON: usize = 16;
/// Relative residual tolerance of a linear solve.
pub const LIN_TOL: f64 = 1e-12;
/// Bordered matrices with a reciprocal condition estimate below this value
/// are treated as rank deficient.
pub const RANK_DROP_RCOND: f64 = 1e-10;
/// Pivots smaller than this multiple of the largest matrix entry make a
/// matrix singular to working precision.
const PIVOT_TOL: f64 = 1e-14;

/// LU factorization with partial (row) pivoting, `P A = L U`, stored packed
/// in one column-major matrix.
#[derive(Debug, Clone)]
pub struct Lu {
    lu: DMatrix<f64>,
    perm: Vec<usize>,
    swaps: usize,
    norm1: f64,
    scale: f64,
    min_pivot: f64,
}

impl Lu {
    /// Factors `a`. Exactly zero pivots are replaced by a tiny value so that
    /// the factorization can still be used for inverse iteration; check
    /// [`Lu::is_singular`] before trusting a solve.
    pub fn new(mut a: DMatrix<f64>) -> Self {
        assert!(a.is_square(), "LU of a non-square matrix");
        let n = a.nrows();
        let norm1 = (0..n)
            .map(|j| a.column(j).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        let scale = a.amax();
        let tiny = f64::EPSILON * scale.max(f64::MIN_POSITIVE);
        let mut perm: Vec<usize> = (0..n).collect();
        let mut swaps = 0;
        let mut min_pivot = f64::INFINITY;

        let data = a.as_mut_slice();
        for k in 0..n {
            let col = &data[k * n..(k + 1) * n];
            let (mut p, mut best) = (k, col[k].abs());
            for (i, v) in col.iter().enumerate().skip(k + 1) {
                if v.abs() > best {
                    best = v.abs();
                    p = i;
                }
            }
            if p != k {
                for j in 0..n {
                    data.swap(j * n + k, j * n + p);
                }
                perm.swap(k, p);
                swaps += 1;
            }
            if data[k * n + k] == 0.0 {
                data[k * n + k] = tiny;
            }
            let pivot = data[k * n + k];
            min_pivot = min_pivot.min(pivot.abs());
            let inv = 1.0 / pivot;
            for v in &mut data[k * n + k + 1..(k + 1) * n] {
                *v *= inv;
            }
            let (head, tail) = data.split_at_mut((k + 1) * n);
            let lcol = &head[k * n + k + 1..(k + 1) * n];
            for j in 0..n - k - 1 {
                let cj = &mut tail[j * n..(j + 1) * n];
                let f = cj[k];
                if f != 0.0 {
                    for (x, l) in cj[k + 1..].iter_mut().zip(lcol) {
                        *x -= f * l;
                    }
                }
            }
        }
        Lu {
            lu: a,
            perm,
            swaps,
            norm1,
            scale,
            min_pivot,
        }
    }

    pub fn dim(&self) -> usize {
        self.lu.nrows()
    }

    pub fn is_singular(&self) -> bool {
        self.scale == 0.0 || self.min_pivot.is_nan() || self.min_pivot <= PIVOT_TOL * self.scale
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.dim();
        let mut x = DVector::from_iterator(n, self.perm.iter().map(|&p| b[p]));
        let a = self.lu.as_slice();
        for k in 0..n {
            let xk = x[k];
            if xk != 0.0 {
                for i in k + 1..n {
                    x[i] -= a[k * n + i] * xk;
                }
            }
        }
        for k in (0..n).rev() {
            x[k] /= a[k * n + k];
            let xk = x[k];
            if xk != 0.0 {
                for i in 0..k {
                    x[i] -= a[k * n + i] * xk;
                }
            }
        }
        x
    }

    /// Solves `Aᵀ x = b`.
    pub fn solve_transpose(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.dim();
        let a = self.lu.as_slice();
        let mut y = b.clone();
        for k in 0..n {
            let col = &a[k * n..k * n + k];
            let s: f64 = col.iter().zip(y.iter()).map(|(u, v)| u * v).sum();
            y[k] = (y[k] - s) / a[k * n + k];
        }
        for k in (0..n).rev() {
            let col = &a[k * n + k + 1..(k + 1) * n];
            let s: f64 = col
                .iter()
                .zip(y.iter().skip(k + 1))
                .map(|(l, v)| l * v)
                .sum();
            y[k] -= s;
        }
        let mut x = DVector::zeros(n);
        for (k, &p) in self.perm.iter().enumerate() {
            x[p] = y[k];
        }
        x
    }

    /// Sign of the determinant and `ln |det A|`.
    pub fn log_det(&self) -> (f64, f64) {
        let n = self.dim();
        let mut sign = if self.swaps.is_multiple_of(2) {
            1.0
        } else {
            -1.0
        };
        let mut log = 0.0;
        for k in 0..n {
            let d = self.lu[(k, k)];
            if d < 0.0 {
                sign = -sign;
            }
            log += d.abs().ln();
        }
        (sign, log)
    }

    /// Hager–Higham estimate of the reciprocal 1-norm condition number.
    pub fn rcond(&self) -> f64 {
        let n = self.dim();
        if n == 0 {
            return 1.0;
        }
        if self.norm1 == 0.0 {
            return 0.0;
        }
        let mut x = DVector::from_element(n, 1.0 / n as f64);
        let mut est = 0.0;
        let mut last = usize::MAX;
        for _ in 0..5 {
            let y = self.solve(&x);
            est = y.lp_norm(1);
            if !est.is_finite() {
                return 0.0;
            }
            let xi = y.map(|v| if v >= 0.0 { 1.0 } else { -1.0 });
            let z = self.solve_transpose(&xi);
            let j = z.iamax();
            if z[j].abs() <= z.dot(&x) || j == last {
                break;
            }
            last = j;
            x.fill(0.0);
            x[j] = 1.0;
        }
        1.0 / (self.norm1 * est)
    }
}

/// Solution of a square system with its condition estimate.
#[derive(Debug, Clone)]
pub struct Solution {
    pub x: DVector<f64>,
    pub rcond: f64,
}

pub fn solve_square(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<Solution> {
    if !a.is_square() || a.nrows() != b.len() {
        return Err(Error::Dimension(format!(
            "solve_square: {}×{} matrix with rhs of length {}",
            a.nrows(),
            a.ncols(),
            b.len()
        )));
    }
    let lu = Lu::new(a.clone());
    if lu.is_singular() {
        return Err(Error::SingularMatrix);
    }
    let mut x = lu.solve(b);
    // one step of iterative refinement
    let r = b - a * &x;
    if r.amax() > LIN_TOL * b.amax() {
        x += lu.solve(&r);
    }
    Ok(Solution {
        rcond: lu.rcond(),
        x,
    })
}

/// `J` with one extra row appended, square when `J` is `m × (m+1)`.
#[derive(Debug, Clone)]
pub struct BorderedSystem {
    pub jac: DMatrix<f64>,
    pub border_row: DVector<f64>,
}

impl BorderedSystem {
    pub fn new(jac: DMatrix<f64>, border_row: DVector<f64>) -> Result<Self> {
        if jac.ncols() != border_row.len() || jac.ncols() != jac.nrows() + 1 {
            return Err(Error::Dimension(format!(
                "bordered system: J is {}×{}, border has length {}",
                jac.nrows(),
                jac.ncols(),
                border_row.len()
            )));
        }
        Ok(BorderedSystem { jac, border_row })
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        bordered(&self.jac, &self.border_row)
    }

    pub fn factor(&self) -> Lu {
        Lu::new(self.matrix())
    }

    pub fn rcond(&self) -> f64 {
        self.factor().rcond()
    }
}

/// Appends `row` below `jac`.
pub fn bordered(jac: &DMatrix<f64>, row: &DVector<f64>) -> DMatrix<f64> {
    let (m, n) = jac.shape();
    let mut b = jac.clone().resize_vertically(m + 1, 0.0);
    for j in 0..n {
        b[(m, j)] = row[j];
    }
    b
}

/// Unit vector spanning the nullspace of a rank-`m` matrix `J` of shape
/// `m × (m+1)`, oriented so that `⟨t, orient⟩ > 0`.
pub fn nullspace_1d(jac: &DMatrix<f64>, orient: &DVector<f64>) -> Result<DVector<f64>> {
    let sys = BorderedSystem::new(jac.clone(), orient.clone())?;
    let lu = sys.factor();
    if lu.is_singular() || lu.rcond() < RANK_DROP_RCOND {
        return Err(Error::RankDrop);
    }
    let mut rhs = DVector::zeros(jac.ncols());
    rhs[jac.nrows()] = 1.0;
    let t = lu.solve(&rhs);
    let mut t = &t / t.norm();
    if t.dot(orient) < 0.0 {
        t = -t;
    }
    Ok(t)
}

/// A square-or-underdetermined nonlinear system `F(z) = 0`.
pub trait NonlinearSystem {
    fn residual(&self, z: &DVector<f64>) -> Result<DVector<f64>>;
    fn jacobian(&self, z: &DVector<f64>) -> Result<DMatrix<f64>>;
}

/// Adapter turning a pair of closures into a [`NonlinearSystem`].
pub struct FnSystem<R, J> {
    pub residual: R,
    pub jacobian: J,
}

impl<R, J> NonlinearSystem for FnSystem<R, J>
where
    R: Fn(&DVector<f64>) -> Result<DVector<f64>>,
    J: Fn(&DVector<f64>) -> Result<DMatrix<f64>>,
{
    fn residual(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        (self.residual)(z)
    }
    fn jacobian(&self, z: &DVector<f64>) -> Result<DMatrix<f64>> {
        (self.jacobian)(z)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct NewtonSettings {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        NewtonSettings {
            tol: NEWTON_TOL,
            max_iter: MAX_NEWTON,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NewtonOutcome {
    pub z: DVector<f64>,
    pub converged: bool,
    pub iters: usize,
    /// ∞-norm of the residual before each update and at the final iterate.
    pub history: Vec<f64>,
}

impl NewtonOutcome {
    pub fn residual_norm(&self) -> f64 {
        self.history.last().copied().unwrap_or(f64::INFINITY)
    }
}

/// Newton's method on `F(z) = 0` together with `⟨border, z − z0⟩ = 0`,
/// starting from `z0`. A square system is handled by passing an empty
/// border.
pub fn newton_correct<S: NonlinearSystem + ?Sized>(
    sys: &S,
    z0: &DVector<f64>,
    border: Option<&DVector<f64>>,
    settings: NewtonSettings,
) -> Result<NewtonOutcome> {
    if let Some(b) = border {
        if b.len() != z0.len() {
            return Err(Error::Dimension("newton border length".into()));
        }
        if b.amax() == 0.0 {
            return Err(Error::Domain("newton border is zero".into()));
        }
    }
    let mut z = z0.clone();
    let mut history = Vec::new();
    let mut iters = 0;
    loop {
        let f = match sys.residual(&z) {
            Ok(f) => f,
            Err(_) if iters > 0 => {
                return Ok(NewtonOutcome {
                    z,
                    converged: false,
                    iters,
                    history,
                })
            }
            Err(e) => return Err(e),
        };
        let norm = f.amax();
        history.push(norm);
        let extra = border.map(|b| b.dot(&(&z - z0))).unwrap_or(0.0);
        if !norm.is_finite() {
            break;
        }
        if norm <= settings.tol && extra.abs() <= settings.tol {
            return Ok(NewtonOutcome {
                z,
                converged: true,
                iters,
                history,
            });
        }
        if iters >= settings.max_iter {
            break;
        }
        // give up early on clear divergence
        if history.len() > 3 && norm > 1e3 * history[0].max(settings.tol) {
            break;
        }
        let jac = sys.jacobian(&z)?;
        let (a, rhs) = match border {
            Some(b) => {
                let mut rhs = -f;
                rhs = rhs.resize_vertically(jac.nrows() + 1, -extra);
                (bordered(&jac, b), rhs)
            }
            None => (jac, -f),
        };
        if !a.is_square() {
            return Err(Error::Dimension(format!(
                "newton: system is {}×{} after bordering",
                a.nrows(),
                a.ncols()
            )));
        }
        let lu = Lu::new(a);
        if lu.is_singular() {
            break;
        }
        let dz = lu.solve(&rhs);
        if !dz.iter().all(|v| v.is_finite()) {
            break;
        }
        z += dz;
        iters += 1;
    }
    Ok(NewtonOutcome {
        z,
        converged: false,
        iters,
        history,
    })
}


#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    fn matrix(n: usize) -> impl Strategy<Value = DMatrix<f64>> {
        proptest::collection::vec(-1.0..1.0f64, n * n).prop_map(move |v| {
            // diagonal shift keeps the samples comfortably nonsingular
            DMatrix::from_vec(n, n, v) + DMatrix::identity(n, n) * (n as f64)
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(500))]

        #[test]
        fn lu_solves_both_systems(a in matrix(6), b in proptest::collection::vec(-10.0..10.0f64, 6)) {
            let b = DVector::from_vec(b);
            let lu = Lu::new(a.clone());
            let x = lu.solve(&b);
            let y = lu.solve_transpose(&b);
            prop_assert!((&a * &x - &b).amax() <= 1e-10);
            prop_assert!((a.transpose() * &y - &b).amax() <= 1e-10);
            prop_assert!(lu.rcond() > 0.0 && lu.rcond() <= 1.0);
        }

        #[test]
        fn nullspace_is_unit_orthogonal_and_oriented(
            v in proptest::collection::vec(-1.0..1.0f64, 5 * 6),
            o in proptest::collection::vec(-1.0..1.0f64, 6),
        ) {
            let jac = DMatrix::from_vec(5, 6, v);
            let orient = DVector::from_vec(o);
            if let Ok(t) = nullspace_1d(&jac, &orient) {
                prop_assert!((t.norm() - 1.0).abs() <= 1e-12);
                let rcond = Lu::new(bordered(&jac, &orient)).rcond();
                prop_assert!((&jac * &t).amax() <= 1e-13 / rcond);
                prop_assert!(t.dot(&orient) > 0.0);
            }
        }
    }
}
