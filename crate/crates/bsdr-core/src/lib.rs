//! Trajectory model for agents whose rationality varies across states.
//!
//! An agent moves on a gridworld for a fixed horizon. Each state has a
//! feature vector; a reward parameter scores states and a rationality
//! parameter scales how strongly the agent cares, state by state. The
//! crate provides the exact forward model (trajectory probabilities,
//! partition function, sampling, expected feature counts) and inverse
//! inference (likelihoods, Bayesian posteriors over parameter grids,
//! gradient-based point estimation, and goal prediction from prefixes).
//!
//! The crate is `no_std` (with `alloc`) so the model can be embedded;
//! IO and experiment harnesses live in the companion CLI crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod error;
pub mod grid;
pub mod inference;
pub mod math;
pub mod model;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = core::result::Result<T, Error>;
