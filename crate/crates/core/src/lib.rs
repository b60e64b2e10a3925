//! Token attribution methods and audits of the protocols used to evaluate them.
//!
//! The crate is `no_std` (with `alloc`). It contains the built-in desk-scale
//! classifiers, the attribution methods (leave-one-out, pad occlusion,
//! marginalization, HEDGE-style hierarchical splitting, gradient×input), the
//! perturbation metrics (AOPC and AUC under delete/replace/pad strategies),
//! synonym-substitution attacks on attributions and rationales, and the
//! field-ablation audit. File formats, reports and the command line live in
//! the `attraudit` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod attack;
pub mod attribution;
pub mod audit;
pub mod corpus;
pub mod error;
pub mod infill;
pub mod linear;
pub mod model;
pub mod perturb;
pub mod rationale;
pub mod text;
pub mod util;

pub use error::{Error, Result};
pub use model::{Classifier, ProbVector};
pub use text::{Field, Instance, PAD};
