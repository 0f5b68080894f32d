//! Block-based procedural road networks and a deterministic driving
//! environment built on top of them.
//!
//! The crate is `no_std` (it needs `alloc`) and contains all of the
//! simulation logic: geometry, block instantiation, the incremental
//! map generator, vehicle dynamics, the traffic manager, sensing, the
//! step/reset environment and the evaluation harness. File formats,
//! rendering and the command line live in the `blockdrive` crate.
#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod blocks;
pub mod env;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod math;
pub mod pgmap;
pub mod rng;
pub mod sensing;
pub mod traffic;
pub mod vehicle;

pub use error::Error;
