//! Two-sided, non-asymptotic bounds on the log marginal likelihood of
//! generalized linear models, valid under misspecification, together with
//! the numerical oracles and experiment harness used to check them.

// `!(a >= b)` is used deliberately so that NaN fails every check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod config;
pub mod curvature;
pub mod data;
pub mod error;
pub mod evidence;
pub mod family;
pub mod harness;
pub mod prior;
pub mod process;
pub mod pseudo_true;
pub mod quadform;
pub mod report;
pub mod rng;

pub use error::{Error, Result};
