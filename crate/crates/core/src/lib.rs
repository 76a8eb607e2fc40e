//! Simulation library for multiuser MIMO downlinks with constant-envelope,
//! phase-quantized transmit signals.
//!
//! The transmitter side provides MMSE precoders for PSK data over an
//! `alpha_x`-PSK transmit alphabet: a phase-quantized zero-forcing baseline,
//! the continuous closed-form MMSE precoder, a suboptimal precoder based on
//! the convex-hull relaxation of the discrete feasible set, and an optimal
//! branch-and-bound precoder built on the same relaxation. The receiver side
//! provides soft detectors that model the precoder-induced distortion of the
//! received signal (exact, Gaussian-approximate, and linear-model variants),
//! LDPC encoding/decoding, and an iterative detection-and-decoding loop.
//! The [`harness`] module runs seeded Monte Carlo BER and complexity
//! experiments on top of all of this.

pub mod alphabet;
pub mod channel;
pub mod coding;
pub mod detectors;
pub mod error;
pub mod harness;
pub mod idd;
pub mod linalg;
pub mod oracle;
pub mod polytope;
pub mod precoders;
pub mod qpsolve;

pub use error::{Error, Result};
