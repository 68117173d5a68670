//! Autonomous vector fields: built-in models and the model-file language.

mod expr;
mod field;
mod parser;

pub use expr::{Arith, BinOp, Expr, Func, VARIABLE_NAMES};
pub use field::{builtin, parse_model, ScalarExpr, StateFunction, VectorField, BUILTIN_NAMES};

use thiserror::Error;

/// Failure while evaluating a field or scalar at a state.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("state has {got} coordinates, field expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("state contains a non-finite coordinate")]
    NonFiniteInput,
    #[error("`{function}` evaluated outside its domain at {argument}")]
    Domain {
        function: &'static str,
        argument: f64,
    },
    #[error("evaluation produced a non-finite value")]
    NonFinite,
}

/// Failure while building a vector field.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("undeclared symbol `{name}` at byte {offset}")]
    UndeclaredSymbol { name: String, offset: usize },
    #[error("time `t` at byte {offset}: only autonomous fields are supported")]
    NonAutonomous { offset: usize },
    #[error("dimension must be 2 or 3, got {0}")]
    Dimension(f64),
    #[error("missing `dim = <2|3>` statement")]
    MissingDimension,
    #[error("{dimension}-dimensional model needs {dimension} equations, found {found}")]
    EquationCount { dimension: usize, found: usize },
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("parameter value for `{0}` is not finite")]
    NonFiniteParameter(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
}
