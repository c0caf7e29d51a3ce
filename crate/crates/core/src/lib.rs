//! Optimal Gaussian noise for unbiased private mean estimation.

pub mod audit;
pub mod cli;
pub mod closed_forms;
pub mod domain;
pub mod duality;
pub mod error;
pub mod linalg;
pub mod mechanism;
pub mod solver;
pub mod trust_region;

pub use domain::{Domain, DomainKind, OracleAnswer};
pub use error::{Error, Result};
pub use linalg::{trp, Exponent, PNorm, SymMatrix};
