//! Conditional chi-squared (CC) and refined conditional chi-squared (RCC)
//! tests for moment inequality models.
//!
//! The crate covers the full-vector tests for `A E[m] <= b`, the subvector
//! versions for conditional moment inequalities with a linearly entering
//! nuisance parameter, confidence sets by test inversion, and Monte Carlo
//! harnesses for size and power studies.
//!
//! ```
//! use momineq::{FullVectorProblem, PolyhedralSpec, Settings, Variant};
//! use nalgebra::{DMatrix, DVector};
//!
//! let spec = PolyhedralSpec::new(DMatrix::identity(2, 2), DVector::zeros(2)).unwrap();
//! let problem = FullVectorProblem::new(
//!     DVector::from_vec(vec![2.0, -3.5]),
//!     DMatrix::identity(2, 2),
//!     1,
//!     spec,
//!     0.05,
//! )
//! .unwrap();
//! let outcome = problem.run_test(Variant::Rcc, &Settings::default()).unwrap();
//! assert!((outcome.statistic - 4.0).abs() < 1e-12);
//! assert!(outcome.reject);
//! ```

pub mod cli;
pub mod dist;
pub mod error;
pub mod fullvector;
pub mod inference;
pub mod linalg;
pub mod montecarlo;
pub mod subvector;

pub use error::{Error, Result};
pub use fullvector::{FullVectorProblem, TestOutcome, Variant};
pub use linalg::{PolyhedralSpec, Settings, Tolerances};
pub use subvector::SubvectorProblem;

/// Crate version embedded in machine-readable outputs.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
