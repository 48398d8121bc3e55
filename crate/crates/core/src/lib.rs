//! Numerical laboratory for Birman–Schwinger-type operators `A* V A` whose
//! weight lives on an Ahlfors-regular singular measure.
//!
//! The pipeline discretizes the measure, assembles the Riesz kernel in
//! Nystrom form, factors it as `G G`, forms the sandwich `G V G` and reads
//! off signed eigenvalues or singular values. Predictions come from the
//! flat-model Weyl density and an exact Fourier oracle on the circle.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod kernel;
pub mod linalg;
pub mod measure;
pub mod special;
pub mod spectral;
pub mod weight;
pub mod weyl;

pub use error::{Error, Result};
