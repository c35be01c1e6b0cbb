//! Simulation of the Wi-Fi power-save loophole: unauthenticated frames make
//! any station reply, which drains batteries and leaks channel state.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attacker;
pub mod cli;
pub mod csi;
pub mod energy;
pub mod error;
pub mod frames;
pub mod medium;
pub mod sensing;
pub mod sim;
pub mod station;

pub use error::{Error, Result};
