//! Fischer–Burmeister complementarity function and the relaxed complementarity
//! residual built from it.
//!
//! `χ(a, b) = √(a² + b²) − a − b` vanishes exactly when `a ≥ 0`, `b ≥ 0` and
//! `ab = 0`. For `κ > 0` the level set `χ = κ` is a smooth curve that stays
//! away from the kink at the origin, which is what makes the relaxed
//! conditions `χ(σᵢ, −Gᵢ(u)) = κᵢ` usable in continuation.

use crate::error::{Error, Result};

/// Radius below which `(a, b)` is treated as the singular point of `χ`.
pub const TOL_SING: f64 = 1e-12;

/// A constraint with `|Gᵢ(u₀)|` at or below this value counts as active.
pub const TOL_ACTIVE: f64 = 1e-8;

/// Default tolerance used when checking complementarity of a computed point.
pub const TOL_NCP: f64 = 1e-9;

/// Value and partial derivatives of `χ` at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NcpValue {
    pub value: f64,
    pub d_a: f64,
    pub d_b: f64,
    /// `(a, b)` is within [`TOL_SING`] of the origin; the partials are then
    /// the symmetric subgradient `1/√2 − 1`.
    pub singular: bool,
}

/// `χ(a, b) = √(a² + b²) − a − b`.
#[inline]
pub fn fb_chi(a: f64, b: f64) -> f64 {
    a.hypot(b) - a - b
}

pub fn fb_chi_grad(a: f64, b: f64) -> NcpValue {
    let r = a.hypot(b);
    if r <= TOL_SING {
        let d = std::f64::consts::FRAC_1_SQRT_2 - 1.0;
        return NcpValue {
            value: r - a - b,
            d_a: d,
            d_b: d,
            singular: true,
        };
    }
    NcpValue {
        value: r - a - b,
        d_a: a / r - 1.0,
        d_b: b / r - 1.0,
        singular: false,
    }
}

/// Solves `χ(a, b) = κ` for `a`, given `b > −κ` and `κ > 0`.
pub fn fb_level_a(b: f64, kappa: f64) -> Result<f64> {
    if kappa.is_nan() || kappa <= 0.0 {
        return Err(Error::Domain(format!("level κ = {kappa} must be positive")));
    }
    if b.is_nan() || b <= -kappa {
        return Err(Error::Domain(format!(
            "b = {b} must exceed −κ = {}",
            -kappa
        )));
    }
    Ok(-kappa * (2.0 * b + kappa) / (2.0 * (b + kappa)))
}

/// Componentwise `χ(σᵢ, −gᵢ) − κᵢ`.
pub fn ncp_residual(sigma: &[f64], g: &[f64], kappa: &[f64]) -> Result<Vec<f64>> {
    if sigma.len() != g.len() || g.len() != kappa.len() {
        return Err(Error::Dimension(format!(
            "ncp_residual: |σ| = {}, |g| = {}, |κ| = {}",
            sigma.len(),
            g.len(),
            kappa.len()
        )));
    }
    Ok(sigma
        .iter()
        .zip(g)
        .zip(kappa)
        .map(|((&s, &gi), &k)| fb_chi(s, -gi) - k)
        .collect())
}

/// Relaxation values and inequality partition at a starting point with
/// vanishing multipliers.
#[derive(Debug, Clone, PartialEq)]
pub struct KappaInit {
    pub kappa0: Vec<f64>,
    /// Indices with `Gᵢ(u₀) > 0` (violated constraints).
    pub positive: Vec<usize>,
    /// Indices with `Gᵢ(u₀) < 0` (strictly satisfied constraints).
    pub negative: Vec<usize>,
}

/// `κ₀ᵢ = χ(0, −Gᵢ(u₀))`, which is `2 Gᵢ(u₀)` on violated constraints and
/// zero on satisfied ones. Starts with an active constraint are rejected.
pub fn kappa_init(g0: &[f64]) -> Result<KappaInit> {
    let mut out = KappaInit {
        kappa0: Vec::with_capacity(g0.len()),
        positive: Vec::new(),
        negative: Vec::new(),
    };
    for (i, &g) in g0.iter().enumerate() {
        if g.abs() <= TOL_ACTIVE {
            return Err(Error::ActiveAtStart { index: i, value: g });
        }
        if g > 0.0 {
            out.positive.push(i);
        } else {
            out.negative.push(i);
        }
        out.kappa0.push(fb_chi(0.0, -g));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chi_values() {
        assert_eq!(fb_chi(0.0, -4.0), 8.0);
        assert_eq!(fb_chi(1.0, 0.0), 0.0);
        assert_eq!(fb_chi(3.0, 4.0), -2.0);
    }

    #[test]
    fn chi_partials_on_the_axis() {
        let g = fb_chi_grad(0.0, 5.0);
        assert_eq!((g.d_a, g.d_b), (-1.0, 0.0));
        let g = fb_chi_grad(0.0, -5.0);
        assert_eq!((g.d_a, g.d_b), (-1.0, -2.0));
        let g = fb_chi_grad(3.0, 4.0);
        assert!((g.d_a + 0.4).abs() < 1e-15 && (g.d_b + 0.2).abs() < 1e-15);
        assert!(!g.singular);
    }

    #[test]
    fn chi_singular_subgradient() {
        let g = fb_chi_grad(0.0, 0.0);
        assert!(g.singular);
        assert_eq!(g.d_a, g.d_b);
        assert!((g.d_a - (0.5f64.sqrt() - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn level_set_solutions() {
        let a = fb_level_a(0.0, 8.0).unwrap();
        assert_eq!(a, -4.0);
        assert_eq!(fb_chi(a, 0.0), 8.0);

        let a = fb_level_a(-2.0, 8.0).unwrap();
        assert!((a + 8.0 / 3.0).abs() < 1e-15);
        assert!((fb_chi(a, -2.0) - 8.0).abs() < 1e-13);

        let a = fb_level_a(10.0, 4.0).unwrap();
        assert!((a + 24.0 / 7.0).abs() < 1e-15);
        assert!((fb_chi(a, 10.0) - 4.0).abs() < 1e-13);
    }

    #[test]
    fn level_set_domain() {
        assert!(matches!(fb_level_a(-8.0, 8.0), Err(Error::Domain(_))));
        assert!(matches!(fb_level_a(1.0, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn residual_examples() {
        let r = ncp_residual(&[0.0, 0.0], &[4.0, -2.0], &[8.0, 0.0]).unwrap();
        assert_eq!(r, vec![0.0, 0.0]);
        let r = ncp_residual(&[2.0 / 3.0, 0.0], &[0.0, -4.0 / 3.0], &[0.0, 0.0]).unwrap();
        assert!(r.iter().all(|v| v.abs() < 1e-15));
        let r = ncp_residual(&[1.0, 1.0], &[0.0, 0.0], &[0.0, 0.0]).unwrap();
        assert_eq!(r, vec![0.0, 0.0]);
        assert!(ncp_residual(&[1.0], &[0.0, 0.0], &[0.0]).is_err());
    }

    #[test]
    fn kappa_partition() {
        let k = kappa_init(&[4.0, -2.0]).unwrap();
        assert_eq!(k.kappa0, vec![8.0, 0.0]);
        assert_eq!((k.positive, k.negative), (vec![0], vec![1]));

        let k = kappa_init(&[6.0, 1.0]).unwrap();
        assert_eq!(k.kappa0, vec![12.0, 2.0]);
        assert_eq!(k.positive, vec![0, 1]);
        assert!(k.negative.is_empty());

        let k = kappa_init(&[-1.0, -1.0]).unwrap();
        assert_eq!(k.kappa0, vec![0.0, 0.0]);
        assert_eq!(k.negative, vec![0, 1]);

        assert!(matches!(
            kappa_init(&[1.0, 1e-9]),
            Err(Error::ActiveAtStart { index: 1, .. })
        ));
    }
}

#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    /// Mixes generic values with exact zeros so that both sides of the
    /// equivalence are sampled.
    fn coord() -> impl Strategy<Value = f64> {
        prop_oneof![3 => -1e3..1e3f64, 1 => Just(0.0), 1 => -1e-6..1e-6f64]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]

        #[test]
        fn chi_vanishes_exactly_on_complementary_pairs(a in coord(), b in coord()) {
            let complementary = a >= 0.0 && b >= 0.0 && a * b == 0.0;
            prop_assert_eq!(fb_chi(a, b) == 0.0, complementary);
            if a < 0.0 || b < 0.0 {
                prop_assert!(fb_chi(a, b) > 0.0);
            }
            if a > 0.0 && b > 0.0 {
                prop_assert!(fb_chi(a, b) < 0.0);
            }
        }

        #[test]
        fn chi_gradient_matches_central_differences(a in -1e2..1e2f64, b in -1e2..1e2f64) {
            prop_assume!(a.hypot(b) > 1e-2);
            let g = fb_chi_grad(a, b);
            prop_assert!(!g.singular);
            prop_assert!((-2.0..=0.0).contains(&g.d_a) && (-2.0..=0.0).contains(&g.d_b));
            let h = 1e-6 * a.hypot(b).max(1.0);
            let fd_a = (fb_chi(a + h, b) - fb_chi(a - h, b)) / (2.0 * h);
            let fd_b = (fb_chi(a, b + h) - fb_chi(a, b - h)) / (2.0 * h);
            prop_assert!((g.d_a - fd_a).abs() <= 1e-6, "{} vs {}", g.d_a, fd_a);
            prop_assert!((g.d_b - fd_b).abs() <= 1e-6, "{} vs {}", g.d_b, fd_b);
        }

        #[test]
        fn level_set_solution_lies_on_the_level(kappa in 1e-3..10.0f64, s in 1e-3..1e2f64) {
            let b = s - kappa;
            let a = fb_level_a(b, kappa).unwrap();
            prop_assert!((fb_chi(a, b) - kappa).abs() <= 1e-9 * (1.0 + a.abs() + b.abs()));
        }

        #[test]
        fn residual_is_componentwise(sigma in proptest::collection::vec(-10.0..10.0f64, 1..6), shift in -5.0..5.0f64) {
            let g: Vec<f64> = sigma.iter().map(|s| s * 0.5 - shift).collect();
            let kappa = vec![0.25; sigma.len()];
            let r = ncp_residual(&sigma, &g, &kappa).unwrap();
            for i in 0..sigma.len() {
                prop_assert_eq!(r[i], fb_chi(sigma[i], -g[i]) - 0.25);
            }
        }
    }
}
