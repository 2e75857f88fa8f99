//! Compute core for unsupervised multimodal (CT + MR) metal artefact reduction.
//!
//! The crate is `no_std` compatible (it needs `alloc`); the default `std`
//! feature only switches on runtime CPU feature detection in the GEMM kernels.
//! Everything here is a pure function of its inputs and seeds: file formats,
//! the command line and plotting live in the `madn` companion crate.
//!
//! Module map:
//!
//! * [`phantom`]: synthetic paired CT/MR anatomy, parallel-beam projection,
//!   filtered back-projection and metal corruption of both modalities.
//! * [`lncc`]: Gaussian-windowed local normalised cross correlation and the
//!   similarity loss, with hand-derived gradients.
//! * [`losses`]: adversarial, reconstruction, artefact-consistency and cycle
//!   terms plus the weighted total.
//! * [`nn`]: a small reverse-mode tape over NCHW tensors (convolutions,
//!   instance norm, activations) and an Adam optimiser.
//! * [`model`]: the three encoders, two generators and two patch
//!   discriminators.
//! * [`training`]: one unpaired adversarial update, inference-time correction
//!   and artefact synthesis.
//! * [`metrics`]: ROI standard deviation, PSNR, SSIM and label Dice.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod error;
pub mod fft;
pub mod grid;
pub mod lncc;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod phantom;
pub mod rng;
pub mod slice;
pub mod training;

pub use error::{Error, Result};
pub use grid::{Grid, Mask};
pub use slice::{Domain, Modality, MultimodalSlice};
