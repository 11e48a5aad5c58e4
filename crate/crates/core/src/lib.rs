//! Numerical laboratory for the L²-constrained, penalized segregation heat
//! flow into the singular target Σ and its long-time limit, the optimal
//! spectral partition.
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`grid`] | uniform grids, Laplacian, quadrature, backward heat kernel |
//! | [`sigma`] | the target Σ: metric, projection, validation |
//! | [`flow`] | the constrained flow, ε-continuation, energy ledger |
//! | [`frequency`] | parabolic frequency functionals, monotonicity fits, blow-ups |
//! | [`interface`] | support labels, signed two-phase field, Lipschitz scans |
//! | [`asymptotics`] | plateau detection, masked eigensolver, limit extraction |
//! | [`oracle`] | reference optimal partitions |
//! | [`io`] | configuration, snapshots, CSV/JSON artifacts, CLI commands |

// NaN-rejecting guards are written as `!(x > 0.0)`; stencil loops index several arrays.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod asymptotics;
pub mod error;
pub mod flow;
pub mod frequency;
pub mod grid;
pub mod interface;
pub mod io;
pub(crate) mod linalg;
pub mod oracle;
pub mod par;
pub mod sigma;

pub use error::{Error, Result};
