//! Algebraic conditions and adjoint-gradient control synthesis for coupled
//! systems of wave equations with coupled Robin boundary conditions.
//!
//! The crate has three layers:
//!
//! * algebra — [`linalg`] (subspace arithmetic), [`reachability`] (the
//!   enlarged controllability matrix `R` and its kernel), [`syncalg`]
//!   (group partitions, the synchronization matrix `C_p`, reduced systems,
//!   bi-orthonormal pinning vectors, `D` synthesis) and [`exact`] (rational
//!   Jordan chains for small integer matrices);
//! * dynamics — [`wavesim`] (a second-order 1-D finite-difference scheme
//!   with a ghost-node Robin closure) and [`control`] (exact discrete
//!   adjoint gradients and conjugate-gradient control synthesis);
//! * plumbing — [`problem`] (JSON problem files, CSV reports) and the
//!   `robinsync` binary.

pub mod control;
pub mod error;
pub mod exact;
pub mod linalg;
pub mod problem;
pub mod reachability;
pub mod syncalg;
pub mod wavesim;

pub use error::{Error, Result};
