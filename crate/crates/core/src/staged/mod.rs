//! Staged construction of the augmented KKT system.

mod params;
mod problem;
mod stage;

pub use params::ParameterState;
pub use problem::{AugmentedPoint, Form, JacobianMeta, ParamRef, StageValues, StagedProblem};
pub use stage::{fd_jacobian, EvalFn, HessFn, MatFn, Stage, StageKind};

#[cfg(test)]
mod tests;
