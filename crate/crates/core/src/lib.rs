//! Missing-mass estimation on a finite alphabet: estimators, constrained
//! Cramér-Rao type lower bounds on the missing-mass MSE, and exact and Monte
//! Carlo evaluation harnesses.
//!
//! The `parallel` feature (on by default) runs trial loops on rayon. Results
//! are identical with and without it.

// negated comparisons are deliberate: NaN has to fail validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bias;
pub mod bounds;
pub mod enumerate;
pub mod error;
pub mod estimators;
pub mod evaluation;
pub mod experiment;
pub mod fisher;
pub mod information;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod plot;
pub mod sim;

pub use bias::{bias_cml, bias_empirical, unbiasedness_defect, BiasProfile, ExpectationMode, Provenance};
pub use bounds::{BoundKind, BoundReport, BoundSpec};
pub use error::{Error, Result};
pub use estimators::{EstimateResult, EstimatorSpec};
pub use fisher::FisherSpec;
pub use information::{MmInfo, MmfimRoute};
pub use linalg::{build_nullspace, NullspaceBasis};
pub use model::{Histogram, Pmf, PmfKind, SampleSet};
pub use sim::Exec;

pub use nalgebra;
