//! Joint 3-D positioning and power allocation for a decode-and-forward UAV
//! relay that serves ground users from a ground base station in a built-up
//! area.
//!
//! The crate is organised bottom-up:
//!
//! - [`geometry`]: blocked-region polyhedra cast by cuboid buildings, point
//!   membership, redundancy pruning and the exact segment/box LoS oracle.
//! - [`channel`]: LoS/NLoS large-scale gains and link capacities.
//! - [`power`]: closed-form max-min power allocation for a fixed position.
//! - [`sca`]: first-order lower bounds and the trust-region positioning
//!   subproblem, solved by a small structured conic interior-point method.
//! - [`lagrangian`]: the two-loop driver (multiplier updates outside,
//!   alternating power/position steps inside).
//! - [`scenario`]: Manhattan-grid scenario generation and JSON I/O.
//! - [`baselines`]: exhaustive-search and heuristic comparison schemes.

// Negated float comparisons are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod channel;
pub mod error;
pub mod geometry;
pub mod lagrangian;
pub mod point;
pub mod power;
pub mod sca;
pub mod scenario;

pub use error::{Error, Result};
pub use point::Point3;

/// Bits per second in one Mbps. Optimisation objectives are carried in Mbps.
pub const BPS_PER_MBPS: f64 = 1.0e6;
