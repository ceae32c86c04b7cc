//! Exact-recovery algorithms and optimality certificates for the Gaussian
//! planted bisection tensor model and the hypercube spiked tensor model.
//!
//! The crate is organised bottom-up:
//!
//! - [`tensor`]: dense tensors, the equal-sign and rank-one signal tensors,
//!   and the closed-form overlap function `phi`.
//! - [`models`]: seeded generators for the planted bisection model, the
//!   spiked tensor model and the 4-uniform hypergraph block model, plus the
//!   closed-form recovery thresholds.
//! - [`estimators`]: brute-force maximum likelihood, degree-2 truncation,
//!   spectral rounding and tensor unfolding.
//! - [`sdp`]: the bisection SDP, an ADMM solver for it, and dual certificates.
//! - [`sos4`]: degree-4 sum-of-squares machinery (subset bases, the
//!   55-dimensional orbit algebra, the constraint projector, and the
//!   pseudo-expectation construction behind the SoS lower bound).
//! - [`experiments`]: Monte-Carlo sweeps and the command-line front end.

pub mod error;
pub mod estimators;
pub mod experiments;
pub mod linalg;
pub mod models;
pub mod sdp;
pub mod sos4;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{DenseTensor, SpikeVector};
