//! Block Chebyshev-Davidson eigensolver for sparse symmetric matrices, with a
//! simulated √p×√p process grid for the distributed variant.
//!
//! Everything in this crate is pure computation over `alloc`: the sequential
//! solver ([`chebdav`]), the grid and collective layer ([`procgrid`]), the
//! A-stationary 1.5D SpMM and distributed filter ([`dist_spmm`]), tall-skinny
//! QR ([`tsqr`]), the distributed driver ([`dist_chebdav`]) and the spectral
//! clustering back end ([`clustering`]). Transports that actually move bytes
//! between threads, file formats and the command line live in the companion
//! `chebspectral` crate.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod chebdav;
pub mod clustering;
pub mod dense;
pub mod dist_chebdav;
pub mod dist_spmm;
mod error;
pub mod graph;
pub mod procgrid;
mod rng;
#[cfg(test)]
mod testutil;
pub mod tsqr;

pub use self::error::{CommError, Error, Result};
pub use self::rng::{random_block_rows, uniform_matrix};
