//! Desk-scale laboratory for information-based shrinking architecture
//! search.
//!
//! The crate implements two one-shot neural architecture search methods on
//! top of a tiny self-contained tensor engine:
//!
//! * **IS-DARTS** — trains a weight-sharing supernet and progressively
//!   discards candidate operations ranked by an information-based
//!   importance measure (the channel-wise variance of each candidate's
//!   output feature map, summed over pixels).
//! * **DARTS** (first-order) — the classic baseline that learns softmax
//!   mixture weights over candidates by alternating architecture and
//!   weight updates, then keeps the top-weighted candidates.
//!
//! Because every search space here is micro-sized, a brute-force oracle can
//! enumerate and train *every* subnetwork, giving exact ground truth to
//! score both methods against (regret, rank correlation, selection-swap
//! defects).
//!
//! Start with the `examples/` directory: each example is a runnable tour of
//! one capability. The `isdarts` binary exposes the same flows as
//! subcommands for scripted use.

pub mod error;
pub mod tensor;

pub use error::{Error, Result};

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod darts;
pub mod data;
pub mod gradcheck;
pub mod iim;
pub mod nn;
pub mod optim;
pub mod oracle;
pub mod shrink;
pub mod space;
pub mod supernet;
pub mod train;
