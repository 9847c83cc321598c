//! Free boundaries, value function and Monte Carlo verification for a
//! finite-fuel singular control problem driven by a Brownian price.

// `!(a < b)` is used on purpose so that NaN inputs fail the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod boundaries;
pub mod cli;
pub mod error;
pub mod model;
pub mod roots;
pub mod simulate;
pub mod transform;
pub mod value;
pub mod verify;

pub use boundaries::{BoundaryPoint, BoundaryTable, Regime, YPair};
pub use error::{Error, Result};
pub use model::Model;
pub use simulate::{McConfig, McEstimate, Policy};
pub use value::{Region, Slice, ValuePoint};
