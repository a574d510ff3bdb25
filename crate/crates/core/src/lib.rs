//! Simulation and control-allocation core for a planar pneumatic soft arm.
//!
//! The arm is modeled as a planar Kirchhoff rod whose angle field obeys a
//! damped wave equation driven by two antagonistic McKibben-type actuators and
//! gravity. A distributed PD tracking law is made realizable by the two
//! pressure inputs through a small box-constrained least-squares problem solved
//! at every control tick.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the command
//! line and parallel batch runs live in the `rotctl` companion crate.
//!
//! Conventions: `ŷ` is horizontal, `ẑ` points down (the direction of gravity),
//! and `θ ≡ 0` is the straight hanging configuration. The centerline tangent is
//! `(−sin θ, cos θ)` so that positive `θ` is a right-handed rotation about the
//! out-of-plane axis `x̂ = ŷ × ẑ`.

#![no_std]
#![deny(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod actuation;
pub mod control;
mod error;
pub mod observer;
pub mod qp;
pub mod rod;
pub mod sim;

pub use error::{Error, Result};
