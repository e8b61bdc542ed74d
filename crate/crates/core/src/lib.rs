//! Deterministic simulator and verification harness for the gradient
//! balancing protocol: a synchronous, center-free method for allocating a
//! fixed resource total across the nodes of a time-varying undirected graph
//! so that the sum of private convex costs is minimized.
//!
//! The crate is organized around six pieces:
//!
//! - [`objectives`]: local convex cost families (quadratic, quartic, and a
//!   derivative-table stub) with certified Lipschitz constants.
//! - [`graph`]: undirected graphs, generators, round-indexed schedules, and
//!   the B-connectivity check for joint connectivity over windows.
//! - [`protocol`]: one synchronous round of the offer/accept exchange, full
//!   trajectories, and the classic center-free baseline update.
//! - [`oracle`]: the centralized optimum (water-filling bisection on the
//!   common derivative value, plus a quadratic closed form).
//! - [`analysis`]: runtime certificates for the protocol's lemma-level
//!   properties, the two convergence-rate bounds, and convergence times.
//! - [`harness`]: scenario configs, experiment orchestration, and CSV export.

#![forbid(unsafe_code)]
// `!(x > 0.0)` style comparisons are deliberate: they reject NaN together
// with the out-of-domain sign in a single check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod graph;
pub mod harness;
pub mod objectives;
pub mod oracle;
pub mod protocol;

pub use error::{Error, Result};
