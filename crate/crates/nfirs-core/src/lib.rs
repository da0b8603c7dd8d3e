//! Near-field channel modeling, favorable-propagation analysis and
//! statistical-CSI sum-rate optimization for IRS-assisted sparse MIMO.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod config;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod moments;
pub mod optimizer;
pub mod stats;

pub use error::{Error, Result};
