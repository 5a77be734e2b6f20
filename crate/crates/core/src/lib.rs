//! Translation-invariant Gibbs measures of the bilayer hidden/observed Ising
//! model on Cayley trees, with exact conditional inference.
//!
//! * [`tree`]: finite Cayley-tree balls and their vertex layout.
//! * [`model`]: parameters, transfer constants and energies.
//! * [`solver`]: positive fixed points of the translation-invariant boundary
//!   law recursion and the phase-region classification.
//! * [`measure`]: boundary laws, exact finite-volume measures, the
//!   compatibility oracle, edge conditionals and the tree-indexed Markov
//!   chain sampler.
//! * [`inference`]: sum-product marginals, max-product MAP, denoising and
//!   anomaly scores, each checked against exhaustive enumeration.

pub mod error;
pub mod inference;
pub mod measure;
pub mod model;
pub mod solver;
pub mod tree;

pub use error::{Error, Result};
