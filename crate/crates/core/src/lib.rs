//! Dyadic-grid workbench for weighted Morrey spaces.
//!
//! Functions and weights are piecewise constant on a dyadic grid over the
//! unit cube, so norms, Muckenhoupt constants, maximal and fractional
//! operators, Hausdorff content and sparse stopping families can all be
//! evaluated exactly and compared against brute force.

pub mod error;
pub mod exec;
pub mod grid;
pub mod norms;
pub mod content;
pub mod weights;
pub mod operators;
pub mod sparse;
pub mod conditions;
pub mod experiments;

#[cfg(test)]
mod proptests;

pub use error::{Error, Result};
pub use grid::{Cube, Fidelity, Grid, GridFunction};
