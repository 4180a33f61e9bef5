//! Finsler sprays, holonomy invariant projective deformations and the
//! numeric obstruction tests for their metrizability.
//!
//! The pipeline starts from a Finsler function written as a [`FieldExpr`],
//! derives its geodesic spray symbolically, and evaluates connection,
//! curvature, Jacobi endomorphism and holonomy brackets pointwise.

// Tensor code reads best with explicit indices.
#![allow(clippy::needless_range_loop)]

pub mod deform;
pub mod error;
pub mod expr;
pub mod field;
pub mod geometry;
pub mod holonomy;
pub mod linalg;
pub mod point;
pub mod sampling;
pub mod spectral;
pub mod tol;
pub mod zoo;

pub use error::{Error, Result};
pub use expr::{FieldExpr, Var};
pub use field::VectorField;
pub use geometry::{FinslerFunction, Spray};
pub use point::TangentPoint;
pub use tol::Tolerance;
