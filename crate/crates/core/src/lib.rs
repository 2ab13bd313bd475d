//! Numerical laboratory for invariant gradient flows on compact embedded
//! manifolds with compact-group symmetry.
//!
//! The crate represents manifolds as constraint sets in a Euclidean ambient
//! space, integrates negative-gradient flows of invariant Morse functions,
//! enumerates critical points and group fixed points, and certifies the
//! structural facts that tie them together: the critical set coincides with
//! the fixed-point set, flag-scenario critical counts match the Weyl-group
//! order, connected components of the index-gap-2 heteroclinic moduli sets
//! are cylinders swept by a circle action with constant stabilizer, and
//! stable/unstable manifolds meet transversally along computed flow lines.
//!
//! Entry points: [`scenario::build`] for the built-in scenarios and
//! [`runner::run_scenario`] for the full certification pipeline behind the
//! `morse-lab` CLI.

pub mod config;
pub mod critical;
pub mod error;
pub mod flow;
pub mod herm;
pub mod manifold;
pub mod moduli;
pub mod morse;
pub mod numdiff;
pub mod report;
pub mod runner;
pub mod scenario;
pub mod solve;
pub mod symmetry;

pub use error::{Error, Result};
