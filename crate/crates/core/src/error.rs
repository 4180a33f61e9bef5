use thiserror::Error;

use crate::expr::{EvalError, ParseError};
use crate::point::PointError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(#[from] ParseError),
    #[error("domain error: {0}")]
    Eval(#[from] EvalError),
    #[error("invalid point: {0}")]
    Point(#[from] PointError),
    #[error("point {point} lies outside the domain (predicate = {value})")]
    OutsideDomain { point: String, value: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("expression is not {degree}-homogeneous in y (max relative error {error:.3e})")]
    NotHomogeneous { degree: i32, error: f64 },
    #[error("metric tensor is singular at {point} (rank {rank} < {dim})")]
    SingularMetric {
        point: String,
        rank: usize,
        dim: usize,
    },
    #[error("factor is not holonomy invariant (max |delta_i P| / max(1, |P|) = {residual:.3e})")]
    NonInvariantFactor { residual: f64 },
    #[error("factor vanishes at {point} (|P| = {value:.3e})")]
    VanishingFactor { point: String, value: f64 },
    #[error("geodesic left the domain at step {index}")]
    DomainExit { index: usize },
    #[error(
        "factor is linear in y (max |P_ij| = {max_hessian:.3e}); a nonlinear factor is required"
    )]
    LinearFactor { max_hessian: f64 },
    #[error("lambda = {lambda} lies within {margin} of the bad set (nearest {nearest})")]
    BadLambda {
        lambda: f64,
        nearest: f64,
        margin: f64,
    },
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("unknown catalog metric `{0}`")]
    UnknownMetric(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}
