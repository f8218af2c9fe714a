//! Estimating a model's clean accuracy on a benchmark whose items may have
//! leaked into training data.
//!
//! The crate is `no_std` (with `alloc`). File formats, the command-line tool
//! and the parallel executor live in the `decontam` crate.

#![cfg_attr(not(test), no_std)]
// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod calibrate;
pub mod corpus;
pub mod error;
pub mod estimators;
pub mod exec;
pub mod experiments;
pub mod math;
pub mod mia;
pub mod seed;
pub mod sim;
pub mod synthpred;

pub use error::{Error, Result, Violation};
