//! Sparse LP and MILP solvers: a bounded revised simplex with an updatable
//! LU factorisation, LP-based branch and bound, and MPS I/O.

pub mod bnb;
pub mod error;
mod lu;
pub mod mps;
pub mod problem;
pub mod simplex;

pub use bnb::{solve_milp, solve_milp_with, Heuristic, MilpHooks, MilpOptions, MilpProblem, MilpSolution, MilpStatus};
pub use error::SolverError;
pub use mps::{apply_name_map, export_mps, import_mps, NameMap};
pub use problem::{LpBuilder, LpProblem, RowSense};
pub use simplex::{solve_lp, LpOptions, LpSolution, LpStatus};
