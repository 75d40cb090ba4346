//! Successive parameter continuation for constrained optimization.

pub mod cli;
pub mod collocation;
pub mod complementarity;
pub mod continuation;
pub mod error;
pub mod examples;
pub mod linalg;
pub mod staged;
pub mod successive_driver;

pub use error::{Error, Result};
