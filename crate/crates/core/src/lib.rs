// `!(x > 0.0)` style checks are deliberate: they reject NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod criteria;
pub mod error;
pub mod hosting_capacity;
pub mod network;
pub mod power_flow;
pub mod reconfiguration;
pub mod scalar;
pub mod scenarios;
pub mod study;

pub use error::{HcError, Result};
pub use scalar::Scalar;

pub type Solution<'v> = power_flow::PowerFlowSolution<'v, f64>;
pub type SolutionF32<'v> = power_flow::PowerFlowSolution<'v, f32>;
