//! Feature-level fusion of hyperspectral (HS) and multispectral (MS) images
//! for pixel-based land-cover classification.
//!
//! An observed low-spatial-resolution HS image and a high-spatial-resolution
//! MS image of the same scene are modeled as projections of one
//! high-resolution coefficient matrix into two different subspaces. The
//! coefficients are recovered by alternating optimization: an ADMM inner loop
//! with a total-variation penalty estimates the coefficients, and an
//! orthogonal Procrustes step re-estimates the HS subspace basis. The
//! recovered coefficients serve directly as low-dimensional classifier
//! features instead of a reconstructed full-resolution cube.
//!
//! Module map:
//! - [`imgops`]: matrix-free degradation operators (cyclic blur, decimation,
//!   spectral response, cyclic first differences) and their adjoints.
//! - [`morphology`]: opening/closing by reconstruction and morphological
//!   profiles of the MS bands.
//! - [`fusion`]: the AO-ADMM solver itself.
//! - [`synth`]: reference-scene generation and Wald-style degradation with
//!   SNR-calibrated noise.
//! - [`eval`]: supervised classification of fused features plus overall
//!   accuracy, average accuracy and kappa metrics.
//! - [`pipeline`]: end-to-end experiment orchestration (comparative runs,
//!   parameter sweeps).
//! - [`io`]: the on-disk cube/label/report formats and class-map rendering.

pub mod cube;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod imgops;
pub mod io;
pub mod morphology;
pub mod pipeline;
pub mod rng;
pub mod synth;

mod fft;

pub use cube::{LabelMap, SpectralCube};
pub use error::{Error, Result};
