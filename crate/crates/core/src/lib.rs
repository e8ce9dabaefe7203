// `!(x > 0.0)` guards are meant to reject NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod error;
pub mod loss;
pub mod oracle;
pub mod pricing;
pub mod quad;
pub mod rates;
pub mod reproduce;
pub mod rng;
pub mod stats;
pub mod sweep;

pub use error::{Error, Result};
