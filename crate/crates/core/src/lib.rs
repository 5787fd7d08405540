//! Closed-loop liquid pouring: model-based volume estimation from pixel-wise
//! liquid labels, a histogram HMM over the target volume, and a PD pouring
//! controller, exercised against a deterministic pour simulator.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baseline;
pub mod closed_loop;
pub mod config;
pub mod controller;
pub mod error;
pub mod experiment;
pub mod filter;
pub mod geometry;
pub mod observation;
pub mod pourlog;
pub mod simulator;

pub use error::{Error, Result};
