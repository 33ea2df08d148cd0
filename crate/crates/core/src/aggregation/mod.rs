//! A small expression language for aggregating retrieved facts: arithmetic,
//! set algebra, dates and the statistics used by computation-heavy
//! questions. It backs the agent's `Compute` tool and answer re-derivation
//! during quality control.

mod dates;
mod eval;
mod parser;
pub mod stats;
mod value;

use thiserror::Error;

pub use dates::{date_diff, parse_date, DateUnit};
pub use eval::{Env, Evaluator};
pub use parser::{parse_expr, BinaryOp, Builtin, Expr, UnaryOp};
pub use stats::{pearson, ses_best_alpha, stddev, SesFit, SesGrid, StdMode};
pub use rust_decimal::Decimal;
pub use value::Value;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum AggregationError {
    #[error("syntax error at {pos}: {message}")]
    Syntax { pos: usize, message: String },
    #[error("unknown function '{name}' at {pos}")]
    UnknownFunction { name: String, pos: usize },
    #[error("unbound variable '{0}'")]
    UnboundVariable(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("division by zero")]
    DivisionByZero,
    #[error("type error: {0}")]
    Type(String),
    #[error("malformed date '{0}'")]
    DateParse(String),
}

/// Parses and evaluates `src` with default precision.
pub fn evaluate(src: &str, env: &Env) -> Result<Value, AggregationError> {
    Evaluator::default().eval(&parse_expr(src)?, env)
}
