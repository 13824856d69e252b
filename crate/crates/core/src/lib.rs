//! Tube-based tracking MPC for plants controlled over lossy networks.
//!
//! The crate covers the offline design (invariant sets, tightened
//! constraints, terminal set), the remote MPC, both ends of the consistency
//! protocol, seeded lossy links and a cart-pole benchmark with experiment
//! orchestration.

// Input guards are written `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cartpole;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod mpc;
pub mod network;
pub mod optimization;
pub mod plant;
pub mod remote;
pub mod synthesis;

pub use error::{Error, Result};
