//! Simulation of the Mean King retrodiction protocol in prime dimension.
//!
//! Alice prepares a maximally entangled pair `|c, r; s>`, the King applies a
//! nonselective measurement in one of the d + 1 mutually unbiased bases to the
//! half he receives, and Alice's measurement in the entangled basis followed by
//! a GF(d) decoding recovers which basis he used. The [`optics`] module models
//! the two-photon PPBS gate that realizes Alice's measurement for d = 2.
//!
//! The crate is `no_std` and needs only `alloc`.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod mub;
pub mod numerics;
pub mod optics;
pub mod protocol;

pub use mub::{BasisLabel, BellState, Coincidence, EntangledLabel, Outcome, PrimeDim};
pub use numerics::{DensityOperator, Matrix, StateVector, C64};
