//! Unitary holonomies induced by finite sequences of degenerate projective
//! measurements.
//!
//! - [`numerics`]: dense complex kernel (Gram-Schmidt, Jacobi SVD) and tolerances.
//! - [`subspaces`]: projectors, complements, principal angles, isometry test.
//! - [`sequences`]: conditional projection dynamics and single-ancilla phase loops.
//! - [`protocols`]: repeat-until-success measurement graphs and their analysis.
//! - [`cli`]: the `holonomy` command-line front end.

pub mod cli;
pub mod error;
pub mod numerics;
pub mod protocols;
pub mod sequences;
pub mod subspaces;

pub use error::{Error, Result};
