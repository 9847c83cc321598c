use thiserror::Error;

use crate::boundaries::Regime;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("{what} = {value} outside the domain {domain}")]
    OutOfDomain {
        what: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("{op} is not defined at c = {c} (regime {found:?})")]
    WrongRegime {
        op: &'static str,
        c: f64,
        found: Regime,
    },

    #[error("exponent {exponent} exceeds the representable range")]
    Overflow { exponent: f64 },

    #[error("lower contact point underflows at c = {c} (ln y1 < {log_floor}); use the single-boundary side")]
    Underflow { c: f64, log_floor: f64 },

    #[error("no sign change on [{lo}, {hi}] while solving {what}")]
    NoBracket {
        what: &'static str,
        lo: f64,
        hi: f64,
    },

    #[error("{what} did not converge (residual {residual:e})")]
    NoConvergence { what: &'static str, residual: f64 },

    #[error("state (x = {x}, c = {c}) sits on a boundary kink; second derivative is one-sided")]
    Kink { x: f64, c: f64 },

    #[error("policy {policy} is not admissible at c = {c}: {reason}")]
    Policy {
        policy: String,
        c: f64,
        reason: &'static str,
    },

    #[error("configuration error: {0}")]
    Config(String),
}
