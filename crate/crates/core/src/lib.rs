//! Asynchronous proximal ADMM (Async-PADMM) for nonconvex consensus problems.
//!
//! The crate is organised bottom-up:
//!
//! - [`problem`]: consensus problems, smooth components and solver state
//! - [`prox`]: soft-thresholding and ball projection
//! - [`stepsize`]: penalty certification (`alpha`, `certify`, `min_rho`)
//! - [`simnet`]: deterministic discrete-event model of a star network
//! - [`algorithms`]: Async-PADMM, its incremental variant and synchronous baselines
//! - [`diagnostics`]: optimality measures and per-iteration residual checks
//! - [`benchmark`]: sparse-PCA instances and table-style campaigns

// Comparisons like `!(x > 0.0)` reject NaN along with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod algorithms;
pub mod benchmark;
pub mod diagnostics;
pub mod error;
pub mod problem;
pub mod prox;
pub mod simnet;
pub mod stepsize;
pub mod trace;

pub type Vector = nalgebra::DVector<f64>;

pub use algorithms::{run, Algorithm, RunConfig, RunOutcome, Termination};
pub use error::{Error, Result};
pub use problem::{ConsensusProblem, QuadraticComponent, SmoothComponent, SolverState};
pub use stepsize::{Curvature, StepsizeCertificate};
pub use trace::IterationTrace;
