//! Decomposition of one-dimensional metric currents into cycles and curves.
//!
//! Currents are finite weighted oriented edge sets in either the sup-norm
//! model of `l^inf` or an intrinsic metric graph. Locally finite currents are
//! given as [`current::AnnulusGenerator`]s and decomposed after a conformal
//! compactification that adjoins a single point at infinity.

pub mod error;
pub mod families;
pub mod flow;
pub mod conformal;
pub mod current;
pub mod decomp;
pub mod geometry;
pub mod io;
pub mod oracle;
pub mod quad;
pub mod study;
pub mod weight;

pub use error::{Error, Result};
