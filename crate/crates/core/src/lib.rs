//! Latent-manifold assurance for image classifiers.
//!
//! A variational autoencoder learns a low-dimensional manifold of the
//! training data. The manifold then drives three tasks against a model under
//! test: combinatorial coverage of latent sections ([`adequacy`]), synthesis
//! of labeled fault-revealing inputs ([`generation`]) and runtime
//! out-of-distribution scoring ([`monitor`]). [`metrics`] scores realism with
//! a Fréchet distance between feature-space Gaussians.
//!
//! The crate is `no_std` (it needs `alloc`). The `std` feature only enables
//! runtime SIMD detection in the matrix kernels.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod adequacy;
pub mod error;
pub mod generation;
pub mod manifold;
pub mod metrics;
pub mod monitor;
pub mod numerics;
pub mod rng;

pub use error::{Error, Result};
pub use numerics::{Activation, Network, Tensor};
