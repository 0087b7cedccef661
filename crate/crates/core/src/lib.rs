//! Rydberg-atom quench proposals, Metropolis-Hastings channels and a
//! discrete-latent autoencoder for sampling Boltzmann distributions over a
//! non-native design space.
//!
//! The crate is organised bottom-up:
//!
//! - [`lattice`]: atom geometries, unit-disk graphs and graph matrices.
//! - [`rydberg`]: the classical Rydberg energy, exact Boltzmann
//!   distributions and the binary/spin change of basis.
//! - [`quench`]: sparse Hamiltonians, Chebyshev time propagation and quench
//!   proposal kernels.
//! - [`mcmc`]: proposal samplers, Metropolis-Hastings channels, chains and
//!   spectral analysis.
//! - [`metrics`]: divergences, binning and lattice metrics.
//! - [`autoenc`]: the quantized-latent autoencoder and its training losses.
//! - [`designspace`]: binary pixel designs, the synthetic objective and the
//!   Renyi benchmark.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod autoenc;
pub mod bits;
pub mod designspace;
pub mod energy;
pub mod error;
pub mod lattice;
pub mod mcmc;
pub mod metrics;
pub mod quench;
pub mod rydberg;

mod bessel;

pub use bits::BitString;
pub use energy::Energy;
pub use error::{Error, Result};
