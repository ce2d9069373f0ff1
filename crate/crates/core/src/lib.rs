//! Simulation and exact-verification toolkit for loop-erased random walk on
//! general two-dimensional lattices, with a radial Loewner evolution engine
//! for intersection-exponent comparisons.
//!
//! The crate is organized around a small set of layers:
//!
//! - [`lattice`]: step laws, covariance normalization, the normalized
//!   embedding that all geometry runs through;
//! - [`geometry`]: balls, annuli, half-wedges and their inner/outer
//!   boundaries under the step support;
//! - [`walk`]: random walk simulation to stopping times, h-transform
//!   conditioned walks, planar Brownian paths;
//! - [`solver`]: dense/iterative linear-algebra ground truth for Green
//!   matrices, hitting probabilities and discrete harmonic extensions;
//! - [`loop_erasure`]: chronological loop erasure, exact path probabilities,
//!   the domain Markov sampler and the unrooted loop measure;
//! - [`exponents`]: Monte Carlo estimators for the growth and escape
//!   exponents with deterministic parallel execution;
//! - [`sle`]: the radial Loewner equation, trace computation and the
//!   Brownian-avoidance exponent pipeline.

pub mod curve;
pub mod exponents;
pub mod geometry;
pub mod lattice;
pub mod loop_erasure;
pub mod rng;
pub mod sle;
pub mod solver;
pub mod stats;
pub mod walk;

pub use lattice::{LatticeSpec, Point};
