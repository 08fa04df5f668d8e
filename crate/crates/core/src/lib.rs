pub mod chain;
pub mod config;
pub mod error;
pub mod eval;
pub mod gpr;
pub mod learner;
pub mod linalg;
pub mod nbi;
pub mod pareto;
pub mod poly;
pub mod solver;
pub mod testbench;

pub use error::{Error, Result};
