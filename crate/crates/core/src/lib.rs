//! Parallel Pieri homotopies for computing all dynamic output feedback laws
//! that place the poles of a linear system, with a generic path tracker and
//! a master/worker job scheduler.

// `!(x <= tol)` is used on purpose so that NaN counts as a failure
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod numerics;
pub mod pieri_comb;
pub mod pieri_engine;
pub mod polysys;
pub mod rng;
pub mod scheduler;
pub mod tracker;

pub use numerics::{ComplexMatrix, ComplexScalar};
pub use pieri_comb::{dmp_count, pieri_root_count, pieri_tree, LocalizationPattern};
pub use pieri_engine::{solve_pieri, verify, ProblemInput, SolutionMap};
pub use scheduler::Schedule;
pub use tracker::{track_path, PathResult, PathStatus, TrackerOptions};
