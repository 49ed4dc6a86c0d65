// negated comparisons are how NaN gets rejected in validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attack;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod mpc;
pub mod params;
pub mod pi;
pub mod plot;
pub mod solver;
pub mod traces;
pub mod zone;

pub use error::{Error, Result};
