//! Surrogate-based toll level optimization for a pricing zone.
//!
//! The crate is `no_std` (it needs `alloc`) and holds every algorithmic part of
//! the toolkit:
//!
//! * [`doe`]: maximin Latin hypercube designs and the initial sample plan,
//! * [`surrogate`]: regressing kriging with reinterpolation and leave-one-out
//!   diagnostics,
//! * [`infill`]: expected improvement, probability of feasibility and the
//!   infill proposal search,
//! * [`ga`]: the real-coded genetic algorithm used as inner solver,
//! * [`direct`]: the DIRECT baseline with a quadratic penalty wrapper,
//! * [`simnet`]: a multi-cell reservoir simulator of the pricing zone,
//! * [`tlp`]: the single-objective and constrained toll level problems and the
//!   optimization driver.
//!
//! File formats, configuration and the command line live in the `nfdtoll`
//! companion crate.
#![no_std]

extern crate alloc;

pub mod direct;
pub mod doe;
mod error;
pub mod ga;
pub mod infill;
pub mod linalg;
pub mod simnet;
pub mod stats;
pub mod surrogate;
pub mod tlp;
mod toll;

pub use error::{Error, Result};
pub use toll::{Bounds, Smoothing, SmoothingViolation, TollVector};

/// Seeded random source used throughout the crate.
pub type Rng = rand_chacha::ChaCha8Rng;
