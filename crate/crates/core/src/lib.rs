//! Gaussian-process emulation and sequential design of computer experiments.
//!
//! The crate fits constant-mean GP emulators, scores candidate points with
//! the ALM, ALC, MI and MICE criteria, drives sequential designs with
//! likelihood-based hyperparameter updates and benchmarks them against
//! one-shot Latin hypercube designs on standard test functions.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod criteria;
pub mod error;
pub mod gp;
pub mod kernels;
pub mod likelihood;
pub mod points;
pub mod sampling;
pub mod seed;
pub mod seq_design;
pub mod testbed;

pub use criteria::{Criterion, ScoreSheet};
pub use error::{Error, Result};
pub use gp::{Design, GpModel};
pub use kernels::{Family, KernelSpec};
pub use points::PointSet;
pub use sampling::CandidatePool;
pub use seq_design::{RunRecord, SequentialConfig};
