//! Built-in problems and the registry the command-line front end uses to
//! look them up by name.

pub mod doedel;
pub mod pendulum;
pub mod quad2d;

use crate::continuation::{Bound, Settings};
use crate::error::{Error, Result};
use crate::staged::{AugmentedPoint, Form, StagedProblem};
use crate::successive_driver::{Intervention, Schedule};

/// Where a reference value comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    /// A number published for the problem.
    Published,
    /// A closed-form solution.
    Analytic,
    /// Computed here by an independent method.
    Derived,
}

/// Reference values of named quantities at a schedule endpoint.
#[derive(Debug, Clone)]
pub struct Golden {
    pub name: &'static str,
    pub values: Vec<(&'static str, f64)>,
    pub tol: f64,
    /// Whether `tol` is relative to the reference value.
    pub relative: bool,
    pub source: Source,
}

/// One comparison made by [`Golden::compare`].
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub quantity: &'static str,
    pub expected: f64,
    pub actual: f64,
    pub pass: bool,
}

impl Golden {
    /// Compares each reference value with the quantity of the same name
    /// at `z`. Unknown quantities fail.
    pub fn compare(&self, p: &StagedProblem, z: &AugmentedPoint) -> Vec<Comparison> {
        self.values
            .iter()
            .map(|&(quantity, expected)| {
                let actual = p.quantity(z, quantity).unwrap_or(f64::NAN);
                let scale = if self.relative { expected.abs() } else { 1.0 };
                Comparison {
                    quantity,
                    expected,
                    actual,
                    pass: (actual - expected).abs() <= self.tol * scale,
                }
            })
            .collect()
    }
}

/// A named problem with its variants, starting points, schedule presets
/// and reference endpoints. The first variant is the default.
#[derive(Debug, Clone)]
pub struct ExampleDef {
    pub name: &'static str,
    pub summary: &'static str,
    pub variants: &'static [&'static str],
    pub starts: &'static [&'static str],
    pub schedules: &'static [&'static str],
    pub golden: Vec<Golden>,
}

/// Everything needed to run a schedule preset.
pub struct Preset {
    /// Variant of the example that `problem` was built from.
    pub variant: &'static str,
    pub problem: StagedProblem,
    pub schedule: Schedule,
    /// Constraint activations applied at MX halts, in order.
    pub script: Vec<Intervention>,
    pub settings: Settings,
    pub bounds: Vec<Bound>,
}

pub fn registry() -> Vec<ExampleDef> {
    vec![
        ExampleDef {
            name: "quad2d",
            summary: "quadratic objective in the plane with two linear inequalities",
            variants: &["default", "psi2"],
            starts: &["u+-", "u++", "u-+", "u--"],
            schedules: &["u+-", "u++", "u-+", "u--"],
            golden: vec![Golden {
                name: "endpoint",
                values: vec![
                    ("x", 5.0 / 3.0),
                    ("y", 1.0 / 3.0),
                    ("mu_psi1", 1.0),
                    ("sigma_g1", 2.0 / 3.0),
                    ("sigma_g2", 0.0),
                ],
                tol: 1e-3,
                relative: false,
                source: Source::Analytic,
            }],
        },
        ExampleDef {
            name: "doedel",
            summary: "boundary-value problem with an integral objective and an integral inequality",
            variants: &["furtherexpanded", "original"],
            starts: &["trivial", "fp3"],
            schedules: &["feasible", "infeasible"],
            golden: vec![Golden {
                name: "feasible",
                values: vec![
                    ("p1", 0.37722),
                    ("p2", 0.23782),
                    ("p3", 0.46761),
                    ("mu_J", 0.28459),
                ],
                tol: 5e-3,
                relative: true,
                source: Source::Published,
            }],
        },
        ExampleDef {
            name: "pendulum",
            summary: "inverted pendulum on a cart, 10-term Chebyshev control",
            variants: &["unconstrained", "input", "output"],
            starts: &["forward"],
            schedules: &["unconstrained", "input", "output"],
            golden: vec![
                Golden {
                    name: "unconstrained",
                    values: vec![("mu_J", 5.5759)],
                    tol: 0.02,
                    relative: true,
                    source: Source::Published,
                },
                Golden {
                    name: "input",
                    values: vec![("mu_J", 11.774)],
                    tol: 0.02,
                    relative: true,
                    source: Source::Published,
                },
                Golden {
                    name: "input-active",
                    values: vec![("xi_input", 0.0)],
                    tol: 1e-6,
                    relative: false,
                    source: Source::Published,
                },
                Golden {
                    name: "output",
                    values: vec![("mu_J", 9.4105)],
                    tol: 0.02,
                    relative: true,
                    source: Source::Published,
                },
            ],
        },
    ]
}

/// Looks up an example by name.
pub fn find(name: &str) -> Result<ExampleDef> {
    registry()
        .into_iter()
        .find(|e| e.name == name)
        .ok_or_else(|| Error::UnknownProblem(name.to_string()))
}

fn pick<'a>(
    def: &ExampleDef,
    what: &str,
    options: &[&'a str],
    choice: Option<&str>,
) -> Result<&'a str> {
    match choice {
        None => Ok(options[0]),
        Some(c) => options.iter().copied().find(|o| *o == c).ok_or_else(|| {
            Error::Config(format!(
                "`{}` has no {what} `{c}` (expected one of {})",
                def.name,
                options.join(", ")
            ))
        }),
    }
}

fn pendulum_variant(name: &str) -> pendulum::Variant {
    pendulum::Variant::from_name(name).expect("registered variant")
}

/// Builds a problem variant; `None` selects the default.
pub fn build(name: &str, variant: Option<&str>) -> Result<StagedProblem> {
    let def = find(name)?;
    let v = pick(&def, "variant", def.variants, variant)?;
    match name {
        "quad2d" => Ok(quad2d::build(v == "psi2")),
        "doedel" => doedel::build(if v == "original" {
            Form::Original
        } else {
            Form::FurtherExpanded
        }),
        "pendulum" => pendulum::build(pendulum_variant(v)),
        _ => unreachable!("registry and builders agree"),
    }
}

/// Starting unknowns `u₀` of a named start for a problem variant.
pub fn start(name: &str, variant: Option<&str>, start: &str) -> Result<Vec<f64>> {
    let def = find(name)?;
    let v = pick(&def, "variant", def.variants, variant)?;
    let s = pick(&def, "start", def.starts, Some(start))?;
    match name {
        "quad2d" => Ok(quad2d::Region::from_name(s)
            .expect("registered start")
            .start()
            .to_vec()),
        "doedel" if s == "fp3" => doedel::feasible_start(),
        "doedel" => {
            let disc = doedel::discretization(doedel::MESH_N, doedel::MESH_M, v != "original")?;
            Ok(doedel::trivial_start(&disc))
        }
        "pendulum" => {
            let variant = pendulum_variant(v);
            let disc = pendulum::discretization(variant, pendulum::MESH_N, pendulum::MESH_M)?;
            pendulum::start(variant, &disc)
        }
        _ => unreachable!("registry and builders agree"),
    }
}

/// A schedule preset with its problem, interventions and run settings.
pub fn preset(name: &str, schedule: &str) -> Result<Preset> {
    let def = find(name)?;
    let s = pick(&def, "schedule", def.schedules, Some(schedule))?;
    let plain = |variant, problem, schedule| Preset {
        variant,
        problem,
        schedule,
        script: vec![],
        settings: Settings::default(),
        bounds: vec![],
    };
    match name {
        "quad2d" => {
            let region = quad2d::Region::from_name(s).expect("registered");
            let (problem, schedule, script) = quad2d::schedule(region)?;
            let variant = if region == quad2d::Region::MinusMinus {
                "psi2"
            } else {
                "default"
            };
            Ok(Preset {
                script,
                ..plain(variant, problem, schedule)
            })
        }
        "doedel" => {
            let problem = doedel::build(Form::FurtherExpanded)?;
            let schedule = if s == "feasible" {
                doedel::feasible_schedule(&problem)?
            } else {
                doedel::infeasible_schedule(&problem)?
            };
            Ok(plain("furtherexpanded", problem, schedule))
        }
        "pendulum" => {
            let variant = pendulum_variant(s);
            let problem = pendulum::build(variant)?;
            let schedule = pendulum::schedule(variant, &problem)?;
            Ok(Preset {
                settings: pendulum::settings(),
                ..plain(s, problem, schedule)
            })
        }
        _ => unreachable!("registry and builders agree"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_names() {
        let names: Vec<_> = registry().iter().map(|e| e.name).collect();
        assert_eq!(names, ["quad2d", "doedel", "pendulum"]);
        assert!(matches!(find("nope"), Err(Error::UnknownProblem(_))));
    }

    #[test]
    fn every_variant_builds_and_every_start_fits() {
        for def in registry() {
            for v in def.variants {
                let p = build(def.name, Some(v)).unwrap();
                for s in def.starts {
                    if def.name == "doedel" && *s == "fp3" {
                        continue; // needs a continuation run
                    }
                    let u0 = start(def.name, Some(v), s).unwrap();
                    assert_eq!(u0.len(), p.n_u(), "{} {v} {s}", def.name);
                }
            }
        }
    }

    #[test]
    fn unknown_variant_is_a_config_error() {
        assert!(matches!(
            build("quad2d", Some("psi3")),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn golden_quantities_exist() {
        for def in registry() {
            for g in &def.golden {
                // pendulum references are named after the variant they hold for
                let variant = (def.name == "pendulum").then(|| g.name.split('-').next().unwrap());
                let p = build(def.name, variant).unwrap();
                for (q, _) in &g.values {
                    assert!(p.has_quantity(q), "{} {q}", def.name);
                }
            }
        }
    }

    #[test]
    fn quad2d_golden_matches_exact_solution() {
        let p = build("quad2d", None).unwrap();
        let mut z = p.trivial_point(&[5.0 / 3.0, 1.0 / 3.0]).unwrap();
        z.mu[0] = 1.0;
        z.sigma = vec![2.0 / 3.0, 0.0];
        let g = &find("quad2d").unwrap().golden[0];
        assert!(g.compare(&p, &z).iter().all(|c| c.pass));
        z.sigma[0] = 0.6;
        assert!(!g.compare(&p, &z).iter().all(|c| c.pass));
    }
}
