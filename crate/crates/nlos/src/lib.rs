//! Confocal non-line-of-sight (NLOS) light transport and reconstruction.
//!
//! A pulsed source and a time-resolved detector scan a grid of points on a
//! visible wall; third-bounce returns from a hidden volume behind the wall are
//! recorded as a transient image. This crate simulates that measurement for
//! synthetic scenes with partial occlusion and surface normals, and recovers
//! the hidden albedo volume with several inverse methods:
//!
//! * [`linear::backproject`] / [`linear::filtered_backproject`] — adjoint-based
//!   estimates under the isotropic, occlusion-free assumption,
//! * [`linear::admm_linear_solve`] — regularized nonnegative least squares
//!   (sparsity + total variation) for a fixed transport operator,
//! * [`factored::als_factorize`] — alternating least squares over albedo,
//!   per-path visibility, and surface normals, the full factored model.
//!
//! The crate is `no_std` + `alloc`; all I/O, file formats, and the command
//! line live in the companion `nlos-cli` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod error;
pub mod eval;
pub mod factored;
pub mod fields;
pub mod geometry;
pub mod linear;
pub mod optim;
pub mod scene;
pub mod transport;

pub use error::Error;
pub use fields::{AlbedoVolume, NormalField, TransientImage, VisibilityField};
pub use geometry::{BinWeights, ScanGeometry};
pub use transport::FactoredModel;

/// Result alias used throughout the crate.
pub type Result<T> = core::result::Result<T, Error>;
