//! Real-time joint energy-storage management and load scheduling for a
//! residential site with local renewable generation.
//!
//! The controller is a drift-plus-penalty policy over four virtual queues
//! (battery shift `Z`, average-delay `X`, and the two auxiliary-variable
//! queues `H_u`, `H_d`). Every per-slot decision is closed form. The
//! [`oracle`] module carries brute-force reference solvers that the closed
//! forms and performance bounds are checked against.
//!
//! Units are fixed crate-wide: energy in kWh per slot, money in dollars,
//! delays in whole slots.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod controller;
pub mod error;
pub mod experiment;
pub mod model;
pub mod oracle;
pub mod par;
pub mod scenario;
pub mod simulator;

pub use error::{Error, Result};
