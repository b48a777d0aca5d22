//! Generalized robustness and weight of resource over unions of convex free
//! sets, together with multicopy witnesses and the discrimination and
//! exclusion tasks built from them.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bloch;
pub mod channels;
pub mod error;
pub mod free_sets;
pub mod io;
pub mod measures;
pub mod operator;
pub mod tasks;
pub mod witness;

pub use error::{Error, Result};
pub use operator::{ComplexMatrix, DensityOperator, HermitianOperator};
