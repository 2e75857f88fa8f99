//! Synthetic paired CT/MR phantoms with simulated metal artefacts.

pub mod anatomy;
pub mod corrupt;
pub mod radon;
pub mod sample;
pub mod spec;

pub use anatomy::{make_anatomy, Anatomy, Implant};
pub use corrupt::{corrupt_ct, corrupt_mr, void_mask};
pub use radon::{fbp, radon, RampFilter, Sinogram};
pub use sample::{make_clean_sample, make_corrupted_sample, PhantomSample};
pub use spec::PhantomSpec;
