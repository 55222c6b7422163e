// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod complexity;
pub mod divergence;
pub mod error;
pub mod model;
pub mod penalized;
pub mod posterior;
pub mod rng;
pub mod special;
pub mod study;

pub use error::{Error, Result};
