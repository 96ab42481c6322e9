//! Update-free identification of corneal hyperelastic parameters.
//!
//! The crate bundles a quarter-eye hexahedral mesh generator, a fiber-reinforced
//! corneal material model, a quasi-static finite element solver with two
//! pressure-coupled fluid cavities, a virtual air-puff tonometry lab, the
//! equilibrium gap identification of `(K, mu, k1)` with a nested `k2` grid
//! search, and a contour-driven morphing step that rebuilds full displacement
//! fields from two-dimensional section contours.

pub mod egm;
pub mod error;
pub mod fem;
pub mod geometry;
pub mod interp;
pub mod material;
pub mod morph;
pub mod study;
pub mod synthlab;
pub mod units;

pub use error::{Error, Result};
