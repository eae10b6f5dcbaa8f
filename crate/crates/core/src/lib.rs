//! Extreme-scenario security region analysis for DC power networks under
//! sequential storm-induced line failures.

pub mod bilevel;
pub mod error;
pub mod grid;
pub mod matpower;
pub mod polytope;
pub mod region;
pub mod scenario;

pub use error::{EssrError, Result};
