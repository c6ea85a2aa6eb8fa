//! Pipelined predict-and-recompute conjugate gradients with silent-error
//! detection and rollback recovery.
//!
//! * [`sparse`], [`mm`], [`gallery`]: CSR matrices, Matrix Market I/O and
//!   synthetic SPD test problems.
//! * [`solvers`]: classical CG and the pipelined Pipe-PR-CG engine.
//! * [`faults`]: single-bit flips injected into solver variables.
//! * [`detection`]: gap/bound criteria that flag corrupted iterations.
//! * [`ft`]: fault-tolerant and adaptive-threshold solvers with rollback.
//! * [`harness`]: sensitivity sweeps, detection campaigns and traces.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod detection;
pub mod faults;
pub mod ft;
pub mod gallery;
pub mod harness;
pub mod mm;
pub mod scalar;
pub mod solvers;
pub mod sparse;

pub use scalar::{Rational, Scalar};
pub use sparse::{SparseError, SparseSpdMatrix};
