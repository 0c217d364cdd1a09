//! Closed forms and problem builders for the Doob and Burkholder
//! inequalities.

pub mod burkholder;
pub mod doob;

use thiserror::Error;

use crate::operator::OperatorError;
use crate::problem::ProblemError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PresetError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("({x}, {y}) is outside the state space |x| <= y")]
    OutsideStateSpace { x: f64, y: f64 },
    #[error("closed form only known at the sharp constant {sharp}, got c = {c}")]
    NonSharpConstant { c: f64, sharp: f64 },
    #[error("arguments must be nonnegative norms, got ({0}, {1})")]
    NegativeInput(f64, f64),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
}
