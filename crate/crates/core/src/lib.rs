//! Numerical construction of rotationally symmetric self-shrinkers asymptotic
//! to a cone, for fully nonlinear curvature flows.

pub mod curvature;
pub mod error;
pub mod fixpoint;
pub mod flow;
pub mod geometry;
pub mod grid;
pub mod linsolve;
pub mod nonlinear;
pub mod oracle;
pub mod quad;

pub use error::{Error, Result};
